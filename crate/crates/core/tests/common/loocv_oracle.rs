// Naive leave-one-out reference: every fold rebuilt from scratch with plain
// loops, PCA from an eigendecomposition of the covariance instead of an SVD.
// Only the SVM solver is shared with the library; it has its own checks.

use airway_core::bifurcation::AngleCode;
use airway_core::ml::{train_svm, Dataset, PcaScope, SvmConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 4–12 subjects, 1–4 features, both classes present, a random class shift.
pub fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=12);
    let m = rng.random_range(1..=4);
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let shift: f64 = rng.random_range(0.0..3.0);
    let data = DMatrix::from_fn(n, m, |i, _| rng.random_range(-2.0..2.0) + shift * labels[i] as f64);
    let features: Vec<AngleCode> = ["B11A1", "B11A2", "B12A1", "B12A2"][..m].iter().map(|c| c.parse().unwrap()).collect();
    Dataset::new((0..n).map(|i| format!("r{i}")).collect(), labels, features, data).unwrap()
}

fn standardize(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let m = rows[0].len();
    let mut means = vec![0.0; m];
    let mut stds = vec![0.0; m];
    for j in 0..m {
        means[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        stds[j] = (rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n).sqrt();
    }
    (means, stds)
}

fn top_directions(z: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let m = z[0].len();
    let cov = DMatrix::from_fn(m, m, |a, b| z.iter().map(|r| r[a] * r[b]).sum::<f64>());
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order[..k].iter().map(|&c| eig.eigenvectors.column(c).iter().cloned().collect()).collect()
}

fn project(dirs: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    dirs.iter().map(|d| d.iter().zip(z).map(|(a, b)| a * b).sum()).collect()
}

/// Held-out predictions for `k` components on all columns of `ds`.
pub fn oracle_predictions(ds: &Dataset, k: usize, scope: PcaScope, svm: &SvmConfig) -> Vec<u8> {
    let n = ds.n();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| ds.data.row(i).iter().cloned().collect()).collect();
    let normalize = |fit_rows: &[Vec<f64>], row: &[f64]| -> Vec<f64> {
        let (mu, sd) = standardize(fit_rows);
        row.iter().enumerate().map(|(j, v)| (v - mu[j]) / sd[j]).collect()
    };
    let mut out = Vec::with_capacity(n);
    for held in 0..n {
        let train_idx: Vec<usize> = (0..n).filter(|&i| i != held).collect();
        let train_labels: Vec<u8> = train_idx.iter().map(|&i| ds.labels[i]).collect();
        if train_labels.iter().all(|&l| l == train_labels[0]) {
            out.push(train_labels[0]);
            continue;
        }
        let fit_rows: Vec<Vec<f64>> = match scope {
            PcaScope::Fold => train_idx.iter().map(|&i| rows[i].clone()).collect(),
            PcaScope::Global => rows.clone(),
        };
        let z_fit: Vec<Vec<f64>> = fit_rows.iter().map(|r| normalize(&fit_rows, r)).collect();
        let dirs = top_directions(&z_fit, k);
        let scores: Vec<Vec<f64>> = train_idx
            .iter()
            .map(|&i| project(&dirs, &normalize(&fit_rows, &rows[i])))
            .collect();
        let x = DMatrix::from_fn(scores.len(), k, |r, c| scores[r][c]);
        let model = train_svm(&x, &train_labels, svm).expect("two-class fold");
        out.push(model.predict(&project(&dirs, &normalize(&fit_rows, &rows[held]))));
    }
    out
}
