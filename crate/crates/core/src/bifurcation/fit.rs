//! Per-bifurcation fit: simulated annealing over the 14 free parameters,
//! then a coordinate-descent polish. The carina radius never moves.
//!
//! Orientation is searched as a rotation vector applied on top of the
//! starting frame, which avoids the Euler-angle singularity at zero pitch.

use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{BifurcationParams, Vec3};
use super::objective::{surface_objective, LumenField, ObjectiveConfig};
use crate::error::{Error, Result};

pub const FREE_PARAMS: usize = 14;
pub const MIN_ANGLE_DEG: f64 = 5.0;
pub const MAX_ANGLE_DEG: f64 = 89.0;
/// Smallest radius of curvature, as a fraction of the larger daughter
/// diameter. Near zero the arc collapses to a rounded corner.
pub const MIN_CURVATURE_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Objective evaluations spent in annealing.
    pub max_evals: usize,
    pub chain_length: usize,
    pub cooling: f64,
    /// Extra evaluations allowed for the polish.
    pub polish_evals: usize,
    pub seed: u64,
    pub objective: ObjectiveConfig,
    /// Residual (mm²) at or below which a fit counts as converged; defaults
    /// to the squared voxel diagonal.
    pub converge_mm2: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            chain_length: 100,
            cooling: 0.95,
            polish_evals: 2_000,
            seed: 0,
            objective: ObjectiveConfig::default(),
            converge_mm2: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if self.chain_length == 0 || !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::Config("chain_length must be positive and cooling in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn converge_threshold(&self, spacing: [f64; 3]) -> f64 {
        self.converge_mm2
            .unwrap_or_else(|| spacing.iter().map(|s| s * s).sum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BifurcationParams,
    pub residual: f64,
    pub initial_residual: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maps the free-parameter vector to full parameters.
struct Encoding {
    base: BifurcationParams,
    base_frame: Rotation3<f64>,
    scale: [f64; FREE_PARAMS],
    lo: [f64; FREE_PARAMS],
    hi: [f64; FREE_PARAMS],
}

impl Encoding {
    fn new(base: BifurcationParams, min_spacing: f64) -> Self {
        let d = base.parent_diameter_mm;
        // Diameters and parent length are bounded relative to the starting parent
        // diameter; wider ranges admit degenerate fits.
        let thin = 2.0 * min_spacing;
        let big = 1e9;
        let pos = base.branch_point();
        let reach = 2.0 * d;
        let lo = [
            d.max(thin),
            (0.5 * d).max(thin),
            MIN_ANGLE_DEG,
            0.0,
            (0.25 * d).max(thin),
            MIN_ANGLE_DEG,
            0.0,
            (0.25 * d).max(thin),
            pos.x - reach,
            pos.y - reach,
            pos.z - reach,
            -big,
            -big,
            -big,
        ];
        let hi = [
            8.0 * d,
            1.5 * d,
            MAX_ANGLE_DEG,
            10.0 * d,
            1.2 * d,
            MAX_ANGLE_DEG,
            10.0 * d,
            1.2 * d,
            pos.x + reach,
            pos.y + reach,
            pos.z + reach,
            big,
            big,
            big,
        ];
        let scale = [
            0.1 * d,
            0.05 * d,
            3.0,
            0.1 * d,
            0.05 * d,
            3.0,
            0.1 * d,
            0.05 * d,
            0.1 * d,
            0.1 * d,
            0.1 * d,
            0.05,
            0.05,
            0.05,
        ];
        Self {
            base,
            base_frame: base.frame(),
            scale,
            lo,
            hi,
        }
    }

    fn encode_base(&self) -> [f64; FREE_PARAMS] {
        let b = &self.base;
        let mut x = [
            b.parent_length_mm,
            b.parent_diameter_mm,
            b.angle1_deg,
            b.curvature_radius1_mm,
            b.diameter1_mm,
            b.angle2_deg,
            b.curvature_radius2_mm,
            b.diameter2_mm,
            b.x_mm,
            b.y_mm,
            b.z_mm,
            0.0,
            0.0,
            0.0,
        ];
        self.project(&mut x);
        x
    }

    fn project(&self, x: &mut [f64; FREE_PARAMS]) {
        for i in 0..FREE_PARAMS {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
        let rc_min = MIN_CURVATURE_FRACTION * x[4].max(x[7]);
        x[3] = x[3].max(rc_min);
        x[6] = x[6].max(rc_min);
        let rv = Vec3::new(x[11], x[12], x[13]);
        let angle = rv.norm();
        if angle > std::f64::consts::FRAC_PI_2 {
            let s = std::f64::consts::FRAC_PI_2 / angle;
            x[11] *= s;
            x[12] *= s;
            x[13] *= s;
        }
    }

    fn decode(&self, x: &[f64; FREE_PARAMS]) -> BifurcationParams {
        let mut p = self.base;
        p.parent_length_mm = x[0];
        p.parent_diameter_mm = x[1];
        p.angle1_deg = x[2];
        p.curvature_radius1_mm = x[3];
        p.diameter1_mm = x[4];
        p.angle2_deg = x[5];
        p.curvature_radius2_mm = x[6];
        p.diameter2_mm = x[7];
        p.x_mm = x[8];
        p.y_mm = x[9];
        p.z_mm = x[10];
        let delta = Rotation3::new(Vec3::new(x[11], x[12], x[13]));
        p.set_frame(&(delta * self.base_frame));
        p
    }
}

/// Anneal from `initial`, then polish. The returned residual never exceeds
/// the initial one: the best point ever evaluated is what comes back.
pub fn fit_bifurcation(field: &LumenField, initial: &BifurcationParams, cfg: &OptimizerConfig) -> Result<FitResult> {
    cfg.validate()?;
    initial.validate()?;
    let enc = Encoding::new(*initial, field.min_spacing());
    let f = |x: &[f64; FREE_PARAMS]| surface_objective(&enc.decode(x), field, &cfg.objective);

    let initial_residual = surface_objective(initial, field, &cfg.objective);
    if !initial_residual.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut x = enc.encode_base();
    let mut fx = f(&x);
    let mut evals = 2;
    let (mut best, mut fbest) = if fx <= initial_residual { (x, fx) } else { (x, initial_residual) };
    let mut best_is_initial = fx > initial_residual;
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let propose = |x: &[f64; FREE_PARAMS], lambda: f64, rng: &mut ChaCha8Rng| {
        let i = rng.random_range(0..FREE_PARAMS);
        let z: f64 = rng.sample(StandardNormal);
        let mut c = *x;
        c[i] += z * enc.scale[i] * lambda;
        enc.project(&mut c);
        c
    };

    // Starting temperature: uphill moves of typical size accepted about half
    // the time.
    let probes = 20.min(cfg.max_evals / 10);
    let mut uphill = Vec::new();
    for _ in 0..probes {
        let c = propose(&x, 1.0, &mut rng);
        let fc = f(&c);
        evals += 1;
        if fc.is_finite() && fc > fx {
            uphill.push(fc - fx);
        }
        if fc < fbest {
            best = c;
            fbest = fc;
            best_is_initial = false;
        }
    }
    let mut temperature = if uphill.is_empty() {
        1e-3 * fx.max(1e-6)
    } else {
        uphill.iter().sum::<f64>() / uphill.len() as f64 / std::f64::consts::LN_2
    };

    let mut lambda = 1.0f64;
    while evals < cfg.max_evals {
        let mut accepted = 0usize;
        let mut tried = 0usize;
        for _ in 0..cfg.chain_length {
            if evals >= cfg.max_evals {
                break;
            }
            let c = propose(&x, lambda, &mut rng);
            let fc = f(&c);
            evals += 1;
            tried += 1;
            if !fc.is_finite() {
                continue;
            }
            let u: f64 = rng.random();
            if fc <= fx || u < (-(fc - fx) / temperature).exp() {
                x = c;
                fx = fc;
                accepted += 1;
            }
            if fc < fbest {
                best = c;
                fbest = fc;
                best_is_initial = false;
            }
        }
        let rate = accepted as f64 / tried.max(1) as f64;
        if rate > 0.5 {
            lambda = (lambda * 1.25).min(4.0);
        } else if rate < 0.2 {
            lambda = (lambda * 0.8).max(1e-3);
        }
        temperature *= cfg.cooling;
    }

    // Coordinate descent with step halving.
    let mut step: Vec<f64> = enc.scale.iter().map(|s| 0.5 * s).collect();
    let budget = evals + cfg.polish_evals;
    'polish: while evals < budget {
        let mut improved = false;
        for i in 0..FREE_PARAMS {
            for sign in [1.0, -1.0] {
                if evals >= budget {
                    break 'polish;
                }
                let mut c = best;
                c[i] += sign * step[i];
                enc.project(&mut c);
                let fc = f(&c);
                evals += 1;
                if fc < fbest {
                    best = c;
                    fbest = fc;
                    best_is_initial = false;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            let mut done = true;
            for (s, scale) in step.iter_mut().zip(enc.scale) {
                *s *= 0.5;
                done &= *s < 1e-3 * scale;
            }
            if done {
                break;
            }
        }
    }

    let params = if best_is_initial { *initial } else { enc.decode(&best) };
    let residual = if best_is_initial { initial_residual } else { fbest };
    let converged = residual <= cfg.converge_threshold(field.spacing()) && has_carina(&params, field);
    Ok(FitResult {
        params,
        residual,
        initial_residual,
        evaluations: evals,
        converged,
    })
}

/// The daughters must separate: both stub ends lie in the lumen and the
/// point midway between them does not.
pub fn has_carina(params: &BifurcationParams, field: &LumenField) -> bool {
    let g = params.geometry();
    let [a, b] = [&g.daughters[0].stub_end, &g.daughters[1].stub_end];
    let mid = (a + b) / 2.0;
    field.is_lumen(a) && field.is_lumen(b) && matches!(field.value(&mid), Some(v) if v < 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifurcation::code::BranchCode;
    use crate::phantom::{generate_phantom, PhantomSpec, VoxelClass};

    fn field_for(spec: &PhantomSpec) -> (LumenField, crate::phantom::GroundTruth) {
        let (v, truth) = generate_phantom(spec).unwrap();
        let mask = truth.classes.iter().map(|&c| (c == VoxelClass::Lumen) as u8).collect();
        (LumenField::from_mask(v.dims(), v.spacing(), mask).unwrap(), truth)
    }

    fn quick() -> OptimizerConfig {
        OptimizerConfig {
            max_evals: 4_000,
            polish_evals: 1_000,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn encoding_round_trips() {
        let spec = PhantomSpec::single_bifurcation(35.0, 55.0, [1.0; 3]);
        let (_, truth) = generate_phantom(&spec).unwrap();
        let p = truth.tree[&BranchCode::root()];
        let enc = Encoding::new(p, 1.0);
        let q = enc.decode(&enc.encode_base());
        assert!((q.frame().matrix() - p.frame().matrix()).abs().max() < 1e-12);
        assert!((q.branch_point() - p.branch_point()).norm() < 1e-12);
        assert_eq!(q.carina_radius_mm, p.carina_radius_mm);
    }

    #[test]
    fn starting_at_truth_stays_there() {
        let (field, truth) = field_for(&PhantomSpec::single_bifurcation(35.0, 55.0, [0.5, 0.5, 1.0]));
        let p = truth.tree[&BranchCode::root()];
        let r = fit_bifurcation(&field, &p, &quick()).unwrap();
        assert!(r.residual <= r.initial_residual);
        assert!(r.converged);
        assert!((r.params.angle1_deg - 35.0).abs() < 3.0, "{:?}", r.params);
        assert!((r.params.angle2_deg - 55.0).abs() < 3.0, "{:?}", r.params);
        assert_eq!(r.params.carina_radius_mm, p.carina_radius_mm);
    }

    #[test]
    fn perturbed_angles_are_recovered() {
        let (field, truth) = field_for(&PhantomSpec::single_bifurcation(30.0, 50.0, [0.5, 0.5, 1.0]));
        let mut p = truth.tree[&BranchCode::root()];
        p.angle1_deg += 8.0;
        p.angle2_deg -= 8.0;
        let r = fit_bifurcation(&field, &p, &OptimizerConfig::default()).unwrap();
        assert!(r.residual <= r.initial_residual);
        let e1 = (r.params.reported_angle_deg(0) - 30.0).abs();
        let e2 = (r.params.reported_angle_deg(1) - 50.0).abs();
        assert!(e1 < 3.0 && e2 < 3.0, "errors {e1} {e2}: {:?}", r.params);
    }

    #[test]
    fn far_start_never_gets_worse() {
        let (field, truth) = field_for(&PhantomSpec::single_bifurcation(35.0, 55.0, [1.0; 3]));
        let mut p = truth.tree[&BranchCode::root()];
        p.x_mm += 40.0;
        let r = fit_bifurcation(&field, &p, &quick()).unwrap();
        assert!(r.residual <= r.initial_residual);
    }

    #[test]
    fn same_seed_same_fit() {
        let (field, truth) = field_for(&PhantomSpec::single_bifurcation(35.0, 55.0, [1.0; 3]));
        let mut p = truth.tree[&BranchCode::root()];
        p.angle1_deg += 5.0;
        let cfg = OptimizerConfig { max_evals: 1_000, polish_evals: 200, ..OptimizerConfig::default() };
        let a = fit_bifurcation(&field, &p, &cfg).unwrap();
        let b = fit_bifurcation(&field, &p, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
