use crate::error::{Error, Result};
use crate::types::{Dataset, Matrix, WindowMatrix};

/// Non-overlapping block means. The trailing remainder is dropped; a block is
/// labelled anomalous if any member sample is.
pub fn aggregate(ds: &Dataset, block: usize) -> Result<Dataset> {
    if block == 0 || block > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "aggregation block {block} must lie in 1..={}",
            ds.len()
        )));
    }
    let blocks = ds.len() / block;
    let mut out = Matrix::zeros(ds.n_series(), blocks);
    for r in 0..ds.n_series() {
        let src = ds.values().row(r);
        for (b, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = src[b * block..(b + 1) * block].iter().sum::<f64>() / block as f64;
        }
    }
    let labels = ds.labels().map(|l| {
        (0..blocks)
            .map(|b| *l[b * block..(b + 1) * block].iter().max().unwrap())
            .collect()
    });
    Dataset::new(
        ds.names().to_vec(),
        out,
        ds.sample_period() * block as f64,
        labels,
    )
}

/// All `L - T + 1` unit-step windows, in start order.
pub fn sliding_windows(ds: &Dataset, window_len: usize) -> Result<Vec<WindowMatrix>> {
    if window_len == 0 || window_len > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "window length {window_len} must lie in 1..={}",
            ds.len()
        )));
    }
    Ok((0..=ds.len() - window_len)
        .map(|start| WindowMatrix {
            values: ds.values().column_range(start, window_len),
            start_index: start,
        })
        .collect())
}

/// Splits at `floor(fraction * L)` without shuffling.
pub fn split_chronological(ds: &Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    let cut = (fraction * ds.len() as f64).floor() as usize;
    if cut == 0 || cut >= ds.len() {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} leaves an empty part of a length-{} dataset",
            ds.len()
        )));
    }
    Ok((ds.slice(0, cut)?, ds.slice(cut, ds.len())?))
}
