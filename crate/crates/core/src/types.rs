//! Domain types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("rows differ in length".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, v) in values.iter().enumerate() {
            self.set(r, c, *v);
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Columns `start..start + len` as a new matrix.
    pub fn column_range(&self, start: usize, len: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, len);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + len]);
        }
        out
    }
}

/// `n` equally sampled series of common length `L`, with optional per-sample labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    values: Matrix,
    sample_period: f64,
    labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(
        names: Vec<String>,
        values: Matrix,
        sample_period: f64,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if names.len() != values.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} names for {} series",
                names.len(),
                values.rows()
            )));
        }
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Empty(
                "dataset needs n >= 1 series and L >= 1 samples".into(),
            ));
        }
        if let Some(l) = &labels {
            if l.len() != values.cols() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} samples",
                    l.len(),
                    values.cols()
                )));
            }
            if l.iter().any(|&b| b > 1) {
                return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
            }
        }
        if let Some(i) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "series {} sample {}",
                i / values.cols(),
                i % values.cols()
            )));
        }
        Ok(Dataset {
            names,
            values,
            sample_period,
            labels,
        })
    }

    /// Number of series `n`.
    pub fn n_series(&self) -> usize {
        self.values.rows()
    }

    /// Number of samples `L`.
    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    /// Chronological slice `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{end} of a length-{} dataset",
                self.len()
            )));
        }
        Dataset::new(
            self.names.clone(),
            self.values.column_range(start, end - start),
            self.sample_period,
            self.labels.as_ref().map(|l| l[start..end].to_vec()),
        )
    }
}

/// One `n x T` chunk of consecutive samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMatrix {
    pub values: Matrix,
    pub start_index: usize,
}

impl WindowMatrix {
    pub fn new(values: Matrix, start_index: usize) -> Result<Self> {
        if values.cols() == 0 {
            return Err(Error::ShapeMismatch("window length T must be >= 1".into()));
        }
        Ok(WindowMatrix {
            values,
            start_index,
        })
    }

    pub fn n_series(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }
}

/// A `d_z x T` draw from the isotropic unit Gaussian prior.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub values: Matrix,
}

impl LatentSequence {
    pub fn sample<R: rand::Rng + ?Sized>(latent_dim: usize, len: usize, rng: &mut R) -> Self {
        let mut values = Matrix::zeros(latent_dim, len);
        crate::rng::fill_gaussian(rng, values.as_mut_slice());
        LatentSequence { values }
    }

    pub fn latent_dim(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }
}

/// Which generative model a checkpoint or report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gan,
    Vae,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Gan => "gan",
            ModelKind::Vae => "vae",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gan" => Ok(ModelKind::Gan),
            "vae" => Ok(ModelKind::Vae),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind {other:?} (expected gan or vae)"
            ))),
        }
    }
}
