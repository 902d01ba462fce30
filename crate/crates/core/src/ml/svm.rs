//! Soft-margin linear SVM, solved in the dual until the duality gap is
//! below tolerance. With a bias term the solver is SMO with second-order
//! working-set selection; without one the equality constraint vanishes and
//! plain dual coordinate descent is used. Both are deterministic.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::dataset::POSITIVE;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// Fit an intercept. The built-in decision rules have none.
    pub bias: bool,
    pub gap_tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            bias: true,
            gap_tolerance: 1e-6,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub iterations: usize,
    pub duality_gap: f64,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }

    /// Positive iff the decision value is strictly above zero.
    pub fn predict(&self, x: &[f64]) -> u8 {
        (self.decision(x) > 0.0) as u8
    }
}

const TAU: f64 = 1e-12;

/// Trains on the rows of `x`; labels are 0 (control, -1) or 1 (positive, +1).
pub fn train_svm(x: &DMatrix<f64>, labels: &[u8], cfg: &SvmConfig) -> Result<SvmModel> {
    if x.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} rows, {} labels", x.nrows(), labels.len())));
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::Config("C must be positive".into()));
    }
    let pos = labels.iter().filter(|&&l| l == POSITIVE).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let y: Vec<f64> = labels.iter().map(|&l| if l == POSITIVE { 1.0 } else { -1.0 }).collect();
    let problem = Problem::new(x, y, cfg.c);
    Ok(if cfg.bias { problem.smo(cfg) } else { problem.dual_cd(cfg) })
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    y: Vec<f64>,
    c: f64,
}

impl<'a> Problem<'a> {
    fn new(x: &'a DMatrix<f64>, y: Vec<f64>, c: f64) -> Self {
        Self { x, y, c }
    }

    fn weights(&self, alpha: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.x.ncols()];
        for (i, a) in alpha.iter().enumerate() {
            if *a != 0.0 {
                let s = a * self.y[i];
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj += s * self.x[(i, j)];
                }
            }
        }
        w
    }

    fn margin(&self, w: &[f64], i: usize) -> f64 {
        w.iter().enumerate().map(|(j, wj)| wj * self.x[(i, j)]).sum()
    }

    /// Primal minus dual objective.
    fn gap(&self, alpha: &[f64], w: &[f64], b: f64) -> f64 {
        let ww: f64 = w.iter().map(|v| v * v).sum();
        let hinge: f64 = (0..self.y.len())
            .map(|i| (1.0 - self.y[i] * (self.margin(w, i) + b)).max(0.0))
            .sum();
        let primal = 0.5 * ww + self.c * hinge;
        let dual = alpha.iter().sum::<f64>() - 0.5 * ww;
        primal - dual
    }

    fn finish(&self, alpha: &[f64], b: f64, iterations: usize) -> SvmModel {
        let w = self.weights(alpha);
        let duality_gap = self.gap(alpha, &w, b);
        SvmModel {
            w,
            b,
            c: self.c,
            iterations,
            duality_gap,
        }
    }

    fn smo(&self, cfg: &SvmConfig) -> SvmModel {
        let n = self.y.len();
        let c = self.c;
        let y = &self.y;
        let gram = self.x * self.x.transpose();
        let k = |i: usize, j: usize| gram[(i, j)];
        let mut alpha = vec![0.0; n];
        // Gradient of ½αᵀQα − eᵀα with Q_ij = y_i y_j K_ij.
        let mut g = vec![-1.0; n];
        let mut eps = 1e-3;
        let mut iter = 0;
        let up = |a: f64, yt: f64| if yt > 0.0 { a < c } else { a > 0.0 };
        let low = |a: f64, yt: f64| if yt > 0.0 { a > 0.0 } else { a < c };
        loop {
            let mut gmax = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..n {
                if up(alpha[t], y[t]) && -y[t] * g[t] >= gmax {
                    gmax = -y[t] * g[t];
                    i = t;
                }
            }
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j = usize::MAX;
            let mut best = f64::INFINITY;
            if i != usize::MAX {
                for t in 0..n {
                    if !low(alpha[t], y[t]) {
                        continue;
                    }
                    gmax2 = gmax2.max(y[t] * g[t]);
                    let diff = gmax + y[t] * g[t];
                    if diff > 0.0 {
                        let quad = (k(i, i) + k(t, t) - 2.0 * k(i, t)).max(TAU);
                        let obj = -diff * diff / quad;
                        if obj <= best {
                            best = obj;
                            j = t;
                        }
                    }
                }
            }
            if gmax + gmax2 < eps || j == usize::MAX || iter >= cfg.max_iter {
                let b = -self.rho(&alpha, &g);
                let w = self.weights(&alpha);
                if iter >= cfg.max_iter || eps < 1e-15 || self.gap(&alpha, &w, b) <= cfg.gap_tolerance {
                    return self.finish(&alpha, b, iter);
                }
                eps *= 0.1;
                continue;
            }
            iter += 1;

            let (ai, aj) = (alpha[i], alpha[j]);
            let quad = (k(i, i) + k(j, j) - 2.0 * k(i, j)).max(TAU);
            if y[i] != y[j] {
                let delta = (-g[i] - g[j]) / quad;
                let diff = ai - aj;
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let delta = (g[i] - g[j]) / quad;
                let sum = ai + aj;
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
            for t in 0..n {
                g[t] += y[t] * (y[i] * k(i, t) * di + y[j] * k(j, t) * dj);
            }
        }
    }

    /// Intercept from the KKT conditions: the mean over free vectors, else
    /// the middle of the feasible interval.
    fn rho(&self, alpha: &[f64], g: &[f64]) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum) = (0usize, 0.0);
        for (t, (&a, &yt)) in alpha.iter().zip(&self.y).enumerate() {
            let yg = yt * g[t];
            if a >= self.c {
                if yt < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if a <= 0.0 {
                if yt > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            sum / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }

    fn dual_cd(&self, cfg: &SvmConfig) -> SvmModel {
        let n = self.y.len();
        let c = self.c;
        let qd: Vec<f64> = (0..n).map(|i| self.x.row(i).norm_squared()).collect();
        let mut alpha = vec![0.0; n];
        let mut w = vec![0.0; self.x.ncols()];
        let mut iter = 0;
        loop {
            for i in 0..n {
                let g = self.y[i] * self.margin(&w, i) - 1.0;
                let pg = if alpha[i] <= 0.0 {
                    g.min(0.0)
                } else if alpha[i] >= c {
                    g.max(0.0)
                } else {
                    g
                };
                if pg == 0.0 {
                    continue;
                }
                let old = alpha[i];
                alpha[i] = if qd[i] > 0.0 { (old - g / qd[i]).clamp(0.0, c) } else { c };
                let s = (alpha[i] - old) * self.y[i];
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj += s * self.x[(i, j)];
                }
            }
            iter += 1;
            if iter >= cfg.max_iter || self.gap(&alpha, &w, 0.0) <= cfg.gap_tolerance {
                return self.finish(&alpha, 0.0, iter);
            }
        }
    }
}
