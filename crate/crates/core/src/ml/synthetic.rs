//! Angle datasets with a known signal: every feature is Gaussian noise in
//! degrees except the informative ones, whose class means differ by
//! `gap_sd` within-class standard deviations.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, CONTROL, POSITIVE};
use crate::bifurcation::code::pool_gen34;
use crate::bifurcation::AngleCode;
use crate::error::{Error, Result};

const MEAN_DEG: f64 = 40.0;
const SD_DEG: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub positives: usize,
    pub controls: usize,
    pub features: Vec<AngleCode>,
    /// Indices into `features`.
    pub informative: Vec<usize>,
    pub gap_sd: f64,
    pub seed: u64,
}

impl PlantedSpec {
    /// 31 positives and 23 controls over the 20-angle pool, with
    /// `B1112A1` and `B1121A2` informative at a 2 SD gap.
    pub fn standard_cohort(seed: u64) -> Self {
        let features = pool_gen34();
        let informative = ["B1112A1", "B1121A2"]
            .iter()
            .map(|c| {
                let code: AngleCode = c.parse().expect("static code");
                features.iter().position(|f| *f == code).expect("code in pool")
            })
            .collect();
        Self {
            positives: 31,
            controls: 23,
            features,
            informative,
            gap_sd: 2.0,
            seed,
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        let n = self.positives + self.controls;
        if self.positives == 0 || self.controls == 0 {
            return Err(Error::Dataset("planted data needs both classes".into()));
        }
        if let Some(&bad) = self.informative.iter().find(|&&j| j >= self.features.len()) {
            return Err(Error::Dataset(format!("informative index {bad} out of range")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut labels: Vec<u8> = (0..n).map(|i| if i < self.positives { POSITIVE } else { CONTROL }).collect();
        labels.shuffle(&mut rng);
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let m = self.features.len();
        let mut data = DMatrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                let mut z: f64 = noise.sample(&mut rng);
                if labels[i] == POSITIVE && self.informative.contains(&j) {
                    z += self.gap_sd;
                }
                data[(i, j)] = MEAN_DEG + SD_DEG * z;
            }
        }
        let ids = (1..=n).map(|i| format!("S{i:03}")).collect();
        Dataset::new(ids, labels, self.features.clone(), data)
    }
}
