use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, Matrix};

/// Per-series extrema of the split normalization was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn n_series(&self) -> usize {
        self.min.len()
    }
}

pub fn minmax_fit(train: &Dataset) -> NormStats {
    let values = train.values();
    let (min, max) = (0..values.rows())
        .map(|r| {
            values
                .row(r)
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
        })
        .unzip();
    NormStats { min, max }
}

/// Maps each value to `(x - min) / (max - min)`. Constant series map to 0.
/// Values outside the fitted range are not clipped.
pub fn minmax_apply(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    if stats.n_series() != ds.n_series() {
        return Err(Error::ShapeMismatch(format!(
            "normalization stats cover {} series, dataset has {}",
            stats.n_series(),
            ds.n_series()
        )));
    }
    let mut out = Matrix::zeros(ds.n_series(), ds.len());
    for r in 0..ds.n_series() {
        let (lo, hi) = (stats.min[r], stats.max[r]);
        let span = hi - lo;
        for (o, &x) in out.row_mut(r).iter_mut().zip(ds.values().row(r)) {
            *o = if span > 0.0 { (x - lo) / span } else { 0.0 };
        }
    }
    Dataset::new(
        ds.names().to_vec(),
        out,
        ds.sample_period(),
        ds.labels().map(<[u8]>::to_vec),
    )
}
