use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Top-k right singular vectors of a centred data matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// k × m; rows are principal directions, each with its largest-magnitude
    /// entry positive.
    pub components: DMatrix<f64>,
    /// All m singular values, non-increasing.
    pub singular_values: Vec<f64>,
}

impl PcaModel {
    pub fn fit(data: &DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, m) = data.shape();
        if k == 0 || k > m {
            return Err(Error::ComponentsOutOfRange { k, max: m });
        }
        // Zero rows change neither the right singular vectors nor the
        // singular values, and make a full set of m directions available
        // when there are fewer rows than features.
        let padded;
        let x = if n < m {
            padded = data.clone().resize_vertically(m, 0.0);
            &padded
        } else {
            data
        };
        let svd = x.clone().svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let mut components = DMatrix::zeros(k, m);
        for (r, &src) in order.iter().take(k).enumerate() {
            let mut row = v_t.row(src).clone_owned();
            let lead = (0..m).fold(0, |best, j| if row[j].abs() > row[best].abs() { j } else { best });
            if row[lead] < 0.0 {
                row.neg_mut();
            }
            components.set_row(r, &row);
        }
        Ok(Self {
            components,
            singular_values: order.iter().map(|&i| svd.singular_values[i]).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn project(&self, row: &[f64]) -> DVector<f64> {
        &self.components * DVector::from_column_slice(row)
    }

    /// n × k scores.
    pub fn project_rows(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        data * self.components.transpose()
    }

    pub fn reconstruct(&self, scores: &DVector<f64>) -> DVector<f64> {
        self.components.transpose() * scores
    }

    /// Share of total variance carried by each direction, all m of them.
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        self.singular_values.iter().map(|s| s * s / total).collect()
    }
}
