use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature standardization with the population (divide-by-n) standard
/// deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    /// Fits on the rows of `data`. Columns named in errors by index.
    pub fn fit(data: &DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::Dataset(format!("need at least 2 rows to scale, found {}", data.nrows())));
        }
        Self::try_fit(data).map_err(|j| Error::ConstantColumn(format!("column {j}")))
    }

    /// As [`Scaler::fit`], reporting the first constant column's index.
    pub(crate) fn try_fit(data: &DMatrix<f64>) -> std::result::Result<Self, usize> {
        let n = data.nrows();
        let mut means = Vec::with_capacity(data.ncols());
        let mut stds = Vec::with_capacity(data.ncols());
        for (j, col) in data.column_iter().enumerate() {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            // Rounding leaves a constant column with a tiny spread.
            if std <= 1e-12 * mean.abs().max(1.0) {
                return Err(j);
            }
            means.push(mean);
            stds.push(std);
        }
        Ok(Self { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| (data[(i, j)] - self.means[j]) / self.stds[j])
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}
