//! The linear decision rule `w · P x′ + bias > 0`, where `x′` is the angle
//! vector standardized with training means and standard deviations. A score
//! of exactly zero is negative.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bifurcation::AngleCode;
use crate::error::{Error, Result};
use crate::ml::dataset::{Dataset, POSITIVE};
use crate::ml::{PcaModel, Scaler, SvmConfig, train_svm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionModel {
    pub angles: Vec<AngleCode>,
    /// Empty when no scaler is attached.
    #[serde(default)]
    pub means: Vec<f64>,
    #[serde(default)]
    pub stds: Vec<f64>,
    /// p × p, row-major.
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    #[serde(default)]
    pub bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub label: u8,
}

const P3: [[f64; 3]; 3] = [
    [0.6428, -0.2779, 0.7138],
    [0.2679, 0.9546, 0.1303],
    [0.7176, -0.1075, -0.6881],
];
const W3: [f64; 3] = [-0.1594, -0.1612, -0.5596];
const CODES3: [&str; 3] = ["B121A1", "B122A2", "B1121A2"];

const P5: [[f64; 5]; 5] = [
    [0.4850, -0.2411, -0.3838, 0.7339, -0.1442],
    [0.1515, -0.3063, 0.9001, 0.2497, -0.1032],
    [0.6673, 0.0180, 0.0489, -0.2737, 0.6907],
    [-0.0893, 0.8204, 0.1900, 0.4748, 0.2395],
    [0.5372, 0.4179, 0.0634, -0.3141, -0.6588],
];
const W5: [f64; 5] = [-0.4109, -0.8083, -0.5690, 0.6330, -0.1499];
const CODES5: [&str; 5] = ["B121A1", "B122A2", "B1121A2", "B1121A1", "B1111A2"];

fn builtin<const N: usize>(codes: [&str; N], p: [[f64; N]; N], w: [f64; N]) -> DecisionModel {
    DecisionModel {
        angles: codes.iter().map(|c| c.parse().expect("static code")).collect(),
        means: Vec::new(),
        stds: Vec::new(),
        p: p.iter().map(|r| r.to_vec()).collect(),
        w: w.to_vec(),
        bias: 0.0,
    }
}

impl DecisionModel {
    /// The built-in three-angle rule, without a scaler.
    pub fn builtin3() -> Self {
        builtin(CODES3, P3, W3)
    }

    /// The built-in five-angle rule, without a scaler.
    pub fn builtin5() -> Self {
        builtin(CODES5, P5, W5)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "builtin3" => Some(Self::builtin3()),
            "builtin5" => Some(Self::builtin5()),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.angles.len()
    }

    pub fn has_scaler(&self) -> bool {
        !self.means.is_empty()
    }

    pub fn with_scaler(mut self, scaler: &Scaler) -> Result<Self> {
        self.means = scaler.means.clone();
        self.stds = scaler.stds.clone();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        let mismatch = |what: String| Err(Error::DimensionMismatch(what));
        if p == 0 {
            return mismatch("model has no angles".into());
        }
        if self.p.len() != p || self.p.iter().any(|r| r.len() != p) {
            return mismatch(format!("P must be {p}x{p}"));
        }
        if self.w.len() != p {
            return mismatch(format!("w has {} entries, expected {p}", self.w.len()));
        }
        if self.means.len() != self.stds.len() || (self.has_scaler() && self.means.len() != p) {
            return mismatch(format!(
                "scaler has {} means and {} stds, expected {p} of each or none",
                self.means.len(),
                self.stds.len()
            ));
        }
        let finite = self.p.iter().flatten().chain(&self.w).chain(&self.means).all(|v| v.is_finite());
        if !finite || !self.bias.is_finite() || self.stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("model entries must be finite and stds positive".into()));
        }
        for (i, a) in self.angles.iter().enumerate() {
            if self.angles[..i].contains(a) {
                return Err(Error::Config(format!("angle {a} repeated")));
            }
        }
        Ok(())
    }

    /// Score for an already standardized vector `x′`.
    pub fn score_normalized(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("{} values for a {}-angle model", x.len(), self.dim())));
        }
        let mut score = self.bias;
        for (row, w) in self.p.iter().zip(&self.w) {
            score += w * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(score)
    }

    pub fn predict_normalized(&self, x: &[f64]) -> Result<Prediction> {
        let score = self.score_normalized(x)?;
        Ok(Prediction {
            score,
            label: (score > 0.0) as u8,
        })
    }

    pub fn predict(&self, measurements: &BTreeMap<AngleCode, f64>) -> Result<Prediction> {
        let x = self
            .angles
            .iter()
            .map(|a| measurements.get(a).copied().ok_or_else(|| Error::MissingAngle(a.to_string())))
            .collect::<Result<Vec<_>>>()?;
        self.predict_raw(&x)
    }

    /// Raw angles in model order.
    pub fn predict_raw(&self, x: &[f64]) -> Result<Prediction> {
        if !self.has_scaler() {
            return Err(Error::ScalerRequired);
        }
        let z: Vec<f64> = x
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        self.predict_normalized(&z)
    }

    /// One prediction per subject, reading the model's angles by name.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<Prediction>> {
        let cols = ds.columns(&self.angles)?;
        (0..ds.n())
            .map(|i| {
                let x: Vec<f64> = cols.iter().map(|&c| ds.data[(i, c)]).collect();
                self.predict_raw(&x)
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A model trained on every row: scaler and PCA on all subjects, then the
/// SVM on the first `k` component scores. `P` is the full p × p rotation
/// and `w` is zero past the first `k` entries, so the rule keeps the
/// built-in shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub model: DecisionModel,
    /// The pipeline's own prediction for each training row.
    pub training_predictions: Vec<u8>,
    pub training_accuracy: f64,
}

pub fn train_model(ds: &Dataset, angles: &[AngleCode], k: usize, svm: &SvmConfig) -> Result<Trained> {
    ds.require_both_classes()?;
    let cols = ds.columns(angles)?;
    let p = cols.len();
    if k == 0 || k > p {
        return Err(Error::ComponentsOutOfRange { k, max: p });
    }
    let x = ds.select(&cols);
    let scaler = Scaler::try_fit(&x).map_err(|j| Error::ConstantColumn(angles[j].to_string()))?;
    let z = scaler.apply(&x);
    let pca = PcaModel::fit(&z, p)?;
    let scores = pca.project_rows(&z);
    let svm_model = train_svm(&scores.columns(0, k).into_owned(), &ds.labels, svm)?;
    let training_predictions: Vec<u8> = (0..ds.n())
        .map(|i| {
            let row: Vec<f64> = scores.row(i).iter().take(k).cloned().collect();
            svm_model.predict(&row)
        })
        .collect();
    let correct = training_predictions.iter().zip(&ds.labels).filter(|(a, b)| a == b).count();
    let mut w = svm_model.w.clone();
    w.resize(p, 0.0);
    let rows = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().cloned().collect()).collect();
    let model = DecisionModel {
        angles: angles.to_vec(),
        means: scaler.means,
        stds: scaler.stds,
        p: rows(&pca.components),
        w,
        bias: svm_model.b,
    };
    model.validate()?;
    Ok(Trained {
        model,
        training_predictions,
        training_accuracy: correct as f64 / ds.n() as f64,
    })
}

/// Positive-class name used in reports.
pub fn label_name(label: u8) -> &'static str {
    if label == POSITIVE {
        "asd"
    } else {
        "control"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::PlantedSpec;
    use proptest::prelude::*;

    #[test]
    fn zero_vector_is_negative() {
        let p = DecisionModel::builtin3().predict_normalized(&[0.0; 3]).unwrap();
        assert_eq!((p.score, p.label), (0.0, 0));
    }

    #[test]
    fn unit_vector_by_hand() {
        // w3 · (first column of P3), multiplied out by hand.
        let expected = -0.1594 * 0.6428 - 0.1612 * 0.2679 - 0.5596 * 0.7176;
        let p = DecisionModel::builtin3().predict_normalized(&[1.0, 0.0, 0.0]).unwrap();
        assert!((p.score - expected).abs() < 1e-12);
        assert!((p.score - -0.547).abs() < 0.002);
        assert_eq!(p.label, 0);
    }

    #[test]
    fn builtin_shapes() {
        let m5 = DecisionModel::builtin5();
        assert_eq!(m5.dim(), 5);
        m5.validate().unwrap();
        let m3 = DecisionModel::builtin3();
        assert_eq!(m3.angles[..], m5.angles[..3]);
        assert_eq!(m5.angles[3].to_string(), "B1121A1");
        assert_eq!(m5.angles[4].to_string(), "B1111A2");
    }

    #[test]
    fn printed_matrices_are_orthonormal_to_print_precision() {
        for m in [DecisionModel::builtin3(), DecisionModel::builtin5()] {
            let p = m.dim();
            let mat = DMatrix::from_fn(p, p, |i, j| m.p[i][j]);
            for i in 0..p {
                assert!((mat.row(i).norm() - 1.0).abs() <= 2e-3);
                assert!((mat.column(i).norm() - 1.0).abs() <= 2e-3);
                for j in 0..i {
                    assert!(mat.row(i).dot(&mat.row(j)).abs() <= 4e-3);
                    assert!(mat.column(i).dot(&mat.column(j)).abs() <= 4e-3);
                }
            }
        }
    }

    #[test]
    fn scaler_required() {
        let m = DecisionModel::builtin3();
        let x: BTreeMap<AngleCode, f64> = m.angles.iter().map(|a| (a.clone(), 40.0)).collect();
        assert!(matches!(m.predict(&x), Err(Error::ScalerRequired)));
        let scaled = m
            .with_scaler(&Scaler {
                means: vec![40.0; 3],
                stds: vec![5.0; 3],
            })
            .unwrap();
        assert_eq!(scaled.predict(&x).unwrap().score, 0.0);
        let mut short = x.clone();
        short.remove(&scaled.angles[1]);
        assert!(matches!(scaled.predict(&short), Err(Error::MissingAngle(_))));
    }

    #[test]
    fn file_round_trip_and_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = DecisionModel::builtin5();
        m.save(&path).unwrap();
        assert_eq!(DecisionModel::load(&path).unwrap(), m);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"P\""));
        let mut bad = m.clone();
        bad.w.pop();
        std::fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
        assert!(matches!(DecisionModel::load(&path), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn trained_model_reproduces_training_predictions() {
        let ds = PlantedSpec::standard_cohort(4).generate().unwrap();
        let angles = ds.features[..4].to_vec();
        for bias in [true, false] {
            let cfg = SvmConfig { bias, ..Default::default() };
            let t = train_model(&ds, &angles, 2, &cfg).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.json");
            t.model.save(&path).unwrap();
            let back = DecisionModel::load(&path).unwrap();
            let preds: Vec<u8> = back.predict_dataset(&ds).unwrap().iter().map(|p| p.label).collect();
            assert_eq!(preds, t.training_predictions);
            assert_eq!(&back.w[2..], &[0.0, 0.0]);
        }
    }

    proptest! {
        #[test]
        fn label_invariant_under_positive_scaling(x in prop::collection::vec(-3.0f64..3.0, 5), s in 0.01f64..100.0) {
            let m = DecisionModel::builtin5();
            let mut scaled = m.clone();
            scaled.w.iter_mut().for_each(|v| *v *= s);
            prop_assert_eq!(m.predict_normalized(&x).unwrap().label, scaled.predict_normalized(&x).unwrap().label);
        }

        #[test]
        fn builtin_rotation_preserves_length(x in prop::collection::vec(-3.0f64..3.0, 5)) {
            let m = DecisionModel::builtin5();
            let px: Vec<f64> = m.p.iter().map(|r| r.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
            let n = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!((n(&px) - n(&x)).abs() <= 2e-3 * n(&x).max(1.0) * 3.0);
        }
    }
}
