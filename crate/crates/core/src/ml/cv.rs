//! Leave-one-out cross-validation of the scale → PCA → linear SVM pipeline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, POSITIVE};
use super::pca::PcaModel;
use super::scaler::Scaler;
use super::svm::{train_svm, SvmConfig};
use crate::bifurcation::AngleCode;
use crate::error::{Error, Result};

/// Where the scaler and PCA are fit: on each training fold (no leakage), or
/// once on all rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaScope {
    #[default]
    Fold,
    Global,
}

impl std::str::FromStr for PcaScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fold" => Ok(Self::Fold),
            "global" => Ok(Self::Global),
            _ => Err(Error::Config(format!("pca scope must be fold or global, got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub svm: SvmConfig,
    pub scope: PcaScope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvMetrics {
    pub k: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Held-out prediction for each subject, in dataset order.
    pub predictions: Vec<u8>,
    /// Folds whose training rows held one class; they predict that class.
    pub single_class_folds: Vec<usize>,
}

impl CvMetrics {
    pub fn from_predictions(k: usize, labels: &[u8], predictions: Vec<u8>, single_class_folds: Vec<usize>) -> Self {
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        for (&l, &p) in labels.iter().zip(&predictions) {
            match (l == POSITIVE, p == POSITIVE) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
            }
        }
        let n = labels.len();
        assert_eq!(tp + tn + fp + fn_, n);
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            k,
            accuracy: ratio(tp + tn, n),
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            tp,
            tn,
            fp,
            fn_,
            predictions,
            single_class_folds,
        }
    }

    pub fn correct(&self) -> usize {
        self.tp + self.tn
    }
}

fn named<'a>(ds: &'a Dataset, cols: &[usize]) -> impl Fn(usize) -> Error + 'a {
    let cols = cols.to_vec();
    move |j| Error::ConstantColumn(ds.features[cols[j]].to_string())
}

/// LOOCV metrics for every k in `1..=k_max` on dataset columns `cols`. The
/// scaler and PCA are shared across k within a fold.
pub fn loocv_curve(ds: &Dataset, cols: &[usize], k_max: usize, cfg: &CvConfig) -> Result<Vec<CvMetrics>> {
    let n = ds.n();
    if n < 3 {
        return Err(Error::Dataset(format!("LOOCV needs at least 3 subjects, found {n}")));
    }
    ds.require_both_classes()?;
    if cols.is_empty() {
        return Err(Error::Config("empty feature subset".into()));
    }
    if k_max == 0 || k_max > cols.len() {
        return Err(Error::ComponentsOutOfRange { k: k_max, max: cols.len() });
    }
    let x = ds.select(cols);
    let labels = &ds.labels;
    let mut predictions = vec![vec![0u8; n]; k_max];
    let mut flagged = Vec::new();

    let global = match cfg.scope {
        PcaScope::Global => {
            let scaler = Scaler::try_fit(&x).map_err(named(ds, cols))?;
            let pca = PcaModel::fit(&scaler.apply(&x), k_max)?;
            Some(pca.project_rows(&scaler.apply(&x)))
        }
        PcaScope::Fold => None,
    };

    for i in 0..n {
        let train_labels: Vec<u8> = labels.iter().enumerate().filter(|&(r, _)| r != i).map(|(_, &l)| l).collect();
        if train_labels.iter().all(|&l| l == train_labels[0]) {
            flagged.push(i);
            for p in predictions.iter_mut() {
                p[i] = train_labels[0];
            }
            continue;
        }
        let (train, held): (DMatrix<f64>, Vec<f64>) = match &global {
            Some(scores) => (scores.clone().remove_row(i), scores.row(i).iter().cloned().collect()),
            None => {
                let xt = x.clone().remove_row(i);
                let scaler = Scaler::try_fit(&xt).map_err(named(ds, cols))?;
                let zt = scaler.apply(&xt);
                let pca = PcaModel::fit(&zt, k_max)?;
                let row: Vec<f64> = x.row(i).iter().cloned().collect();
                let held = pca.project(&scaler.apply_row(&row));
                (pca.project_rows(&zt), held.iter().cloned().collect())
            }
        };
        for k in 1..=k_max {
            let model = train_svm(&train.columns(0, k).into_owned(), &train_labels, &cfg.svm)?;
            predictions[k - 1][i] = model.predict(&held[..k]);
        }
    }
    Ok(predictions
        .into_iter()
        .enumerate()
        .map(|(k, p)| CvMetrics::from_predictions(k + 1, labels, p, flagged.clone()))
        .collect())
}

pub fn loocv_evaluate(ds: &Dataset, subset: &[AngleCode], k: usize, cfg: &CvConfig) -> Result<CvMetrics> {
    let cols = ds.columns(subset)?;
    if k == 0 || k > cols.len() {
        return Err(Error::ComponentsOutOfRange { k, max: cols.len() });
    }
    Ok(loocv_curve(ds, &cols, k, cfg)?.pop().expect("k >= 1"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    /// Entry `k - 1` holds the metrics with k components.
    pub points: Vec<CvMetrics>,
    /// Highest accuracy, smallest k on ties.
    pub best_k: usize,
}

pub fn pc_sweep(ds: &Dataset, pool: &[AngleCode], cfg: &CvConfig) -> Result<Sweep> {
    let cols = ds.columns(pool)?;
    let points = loocv_curve(ds, &cols, cols.len(), cfg)?;
    let best_k = points
        .iter()
        .max_by(|a, b| a.correct().cmp(&b.correct()).then(b.k.cmp(&a.k)))
        .expect("non-empty pool")
        .k;
    Ok(Sweep { points, best_k })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let ids = (0..4).map(|i| format!("s{i}")).collect();
        let features = vec!["B111A1".parse().unwrap(), "B111A2".parse().unwrap()];
        let data = DMatrix::from_row_slice(4, 2, &[10.0, 11.0, 12.0, 9.0, 50.0, 52.0, 51.0, 49.0]);
        Dataset::new(ids, vec![0, 0, 1, 1], features, data).unwrap()
    }

    #[test]
    fn separated_points_all_correct() {
        let ds = toy();
        for scope in [PcaScope::Fold, PcaScope::Global] {
            let cfg = CvConfig { scope, ..Default::default() };
            let m = loocv_evaluate(&ds, &ds.features.clone(), 1, &cfg).unwrap();
            assert_eq!(m.correct(), 4, "{scope:?}");
            assert_eq!(m.predictions.len(), 4);
            assert_eq!((m.sensitivity, m.specificity), (1.0, 1.0));
        }
    }

    #[test]
    fn one_class_training_fold_predicts_it() {
        let ids = (0..3).map(|i| format!("s{i}")).collect();
        let data = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 9.0]);
        let ds = Dataset::new(ids, vec![0, 0, 1], vec!["B11A1".parse().unwrap()], data).unwrap();
        let m = loocv_evaluate(&ds, &ds.features.clone(), 1, &CvConfig::default()).unwrap();
        assert_eq!(m.single_class_folds, vec![2]);
        assert_eq!(m.predictions[2], 0);
    }

    #[test]
    fn metric_identities() {
        let m = CvMetrics::from_predictions(1, &[1, 1, 0, 0, 1], vec![1, 0, 0, 1, 1], vec![]);
        assert_eq!((m.tp, m.tn, m.fp, m.fn_), (2, 1, 1, 1));
        assert_eq!(m.accuracy, 3.0 / 5.0);
        assert_eq!(m.sensitivity, 2.0 / 3.0);
        assert_eq!(m.specificity, 0.5);
    }

    #[test]
    fn errors() {
        let ds = toy();
        let f = ds.features.clone();
        assert!(matches!(loocv_evaluate(&ds, &f, 3, &CvConfig::default()), Err(Error::ComponentsOutOfRange { .. })));
        assert!(matches!(
            loocv_evaluate(&ds, &["B1A1".parse().unwrap()], 1, &CvConfig::default()),
            Err(Error::MissingAngle(_))
        ));
    }

    #[test]
    fn quantized_to_one_over_n() {
        let ds = crate::ml::synthetic::PlantedSpec::standard_cohort(3).generate().unwrap();
        let m = loocv_evaluate(&ds, &ds.features[..3], 2, &CvConfig::default()).unwrap();
        let n = ds.n() as f64;
        assert!(((m.accuracy * n).round() - m.accuracy * n).abs() < 1e-9);
        assert_eq!(m.predictions.len(), ds.n());
    }
}
