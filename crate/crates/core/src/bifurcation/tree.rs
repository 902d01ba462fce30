//! Fit the tree bifurcation by bifurcation, starting at the trachea and
//! descending into every daughter wide enough to resolve (six in-plane
//! voxels by default).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::code::{AngleCode, BranchCode};
use super::fit::{fit_bifurcation, FitResult, OptimizerConfig, MAX_ANGLE_DEG, MIN_ANGLE_DEG, MIN_CURVATURE_FRACTION};
use super::model::{any_perpendicular, BifurcationParams, Vec3};
use super::objective::{surface_objective, LumenField};
use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub optimizer: OptimizerConfig,
    /// Daughters narrower than this many in-plane voxels become leaves.
    pub min_diameter_voxels: f64,
    /// Hard stop on descent depth.
    pub max_generation: usize,
    /// Branching-plane orientations tried when seeding a child fit.
    pub roll_steps: usize,
    /// Independent fits per child bifurcation, from its best-scoring starts.
    pub starts: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            min_diameter_voxels: 6.0,
            max_generation: 8,
            roll_steps: 12,
            starts: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEntry {
    #[serde(flatten)]
    pub params: BifurcationParams,
    pub residual: f64,
    pub converged: bool,
}

impl TreeEntry {
    /// Angles A1/A2: parent axis against each daughter's exit tangent.
    pub fn angles_deg(&self) -> [f64; 2] {
        [self.params.reported_angle_deg(0), self.params.reported_angle_deg(1)]
    }
}

/// JSON form: an object keyed by B-code.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AirwayTree {
    pub entries: BTreeMap<BranchCode, TreeEntry>,
}

impl AirwayTree {
    pub fn get(&self, code: &BranchCode) -> Option<&TreeEntry> {
        self.entries.get(code)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn converged_codes(&self) -> BTreeSet<BranchCode> {
        self.entries
            .iter()
            .filter(|(_, e)| e.converged)
            .map(|(c, _)| c.clone())
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tree: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        for code in tree.entries.keys() {
            if let Some(parent) = code.parent() {
                if !tree.entries.contains_key(&parent) {
                    return Err(Error::Config(format!("{code} present without its parent {parent}")));
                }
            }
        }
        Ok(tree)
    }
}

fn code_hash(code: &BranchCode) -> u64 {
    // FNV-1a: stable across platforms and releases.
    code.to_string()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Put the larger daughter first; equal diameters keep their order.
fn normalize(p: BifurcationParams) -> BifurcationParams {
    if p.diameter2_mm > p.diameter1_mm {
        p.swapped()
    } else {
        p
    }
}

/// A daughter lumen seen from a probe sphere.
#[derive(Clone, Copy, Debug)]
pub struct ProbeHit {
    pub direction: Vec3,
    pub diameter_mm: f64,
}

const PROBE_POINTS: usize = 4096;

fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Lumen patches on the forward half of a sphere of `radius` around
/// `center`, largest first. Each patch is a candidate daughter; its
/// direction is the mean of its points and its diameter follows from its
/// solid angle.
pub fn probe_daughters(field: &LumenField, center: &Vec3, axis: &Vec3, radius: f64) -> Vec<ProbeHit> {
    let dirs = fibonacci_sphere(PROBE_POINTS);
    let cell = 4.0 * std::f64::consts::PI / PROBE_POINTS as f64;
    let link = (2.5 * cell.sqrt()).cos();
    let hits: Vec<Vec3> = dirs
        .into_iter()
        .filter(|d| d.dot(axis) > 0.05 && field.is_lumen(&(center + d * radius)))
        .collect();
    // Union-find over angular neighbours.
    let mut parent: Vec<usize> = (0..hits.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..hits.len() {
        for j in i + 1..hits.len() {
            if hits[i].dot(&hits[j]) > link {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec3, usize)> = BTreeMap::new();
    for i in 0..hits.len() {
        let r = find(&mut parent, i);
        let g = groups.entry(r).or_insert((Vec3::zeros(), 0));
        g.0 += hits[i];
        g.1 += 1;
    }
    let mut out: Vec<(usize, ProbeHit)> = groups
        .into_values()
        .filter(|(_, n)| *n >= 3)
        .map(|(sum, n)| {
            let diameter = 2.0 * radius * (n as f64 * cell / std::f64::consts::PI).sqrt();
            (
                n,
                ProbeHit {
                    direction: sum.normalize(),
                    diameter_mm: diameter,
                },
            )
        })
        .collect();
    out.sort_by_key(|e| std::cmp::Reverse(e.0));
    out.into_iter().map(|(_, h)| h).collect()
}

/// Starting guesses for the bifurcation at the end of daughter `i`, best
/// first: walk down the daughter's exit tangent until the lumen ends (at the
/// next carina) and step back about one radius. Probe spheres of several
/// radii around that point each locate the two daughters; if none can
/// separate them, a grid over the branching-plane roll is used instead.
pub fn child_inits(
    field: &LumenField,
    parent: &BifurcationParams,
    daughter: usize,
    cfg: &ExtractConfig,
) -> Vec<BifurcationParams> {
    let g = parent.geometry();
    let d = &g.daughters[daughter];
    let diameter = parent.diameters()[daughter];
    let step = 0.25 * field.min_spacing();
    let limit = 20.0 * diameter;
    let mut t = 0.0;
    while t < limit && field.is_lumen(&(d.exit_point + d.exit_dir * t)) {
        t += step;
    }
    let along = (t - 0.7 * diameter).max(0.5 * d.stub_len);
    let origin = d.exit_point + d.exit_dir * along;
    let axis = d.exit_dir;

    let d1 = 0.8 * diameter;
    let d2 = 0.65 * diameter;
    let mut base = BifurcationParams {
        parent_length_mm: (0.8 * along).max(diameter),
        parent_diameter_mm: diameter,
        angle1_deg: 35.0,
        curvature_radius1_mm: MIN_CURVATURE_FRACTION * d1,
        diameter1_mm: d1,
        angle2_deg: 35.0,
        curvature_radius2_mm: MIN_CURVATURE_FRACTION * d1,
        diameter2_mm: d2,
        x_mm: 0.0,
        y_mm: 0.0,
        z_mm: 0.0,
        yaw_deg: 0.0,
        pitch_deg: 0.0,
        roll_deg: 0.0,
        carina_radius_mm: 0.1 * diameter,
    };
    base.set_branch_point(origin);

    let score = |p: &BifurcationParams| surface_objective(p, field, &cfg.optimizer.objective);
    let mut found: Vec<(f64, BifurcationParams)> = Vec::new();
    for scale in [1.2, 1.6, 2.0, 2.5] {
        let hits = probe_daughters(field, &origin, &axis, scale * diameter);
        if hits.len() < 2 {
            continue;
        }
        let (h1, h2) = (hits[0], hits[1]);
        let spread = h1.direction - h2.direction;
        let ex = spread - axis * spread.dot(&axis);
        if ex.norm() < 1e-6 {
            continue;
        }
        let mut p = base;
        p.set_frame(&BifurcationParams::frame_from_axes(axis, ex));
        let clamp_d = |v: f64| v.clamp(0.3 * diameter, diameter);
        let (pd1, pd2) = (clamp_d(h1.diameter_mm), clamp_d(h2.diameter_mm));
        p.diameter1_mm = pd1;
        p.diameter2_mm = pd2;
        p.curvature_radius1_mm = MIN_CURVATURE_FRACTION * pd1.max(pd2);
        p.curvature_radius2_mm = p.curvature_radius1_mm;
        let angle = |u: &Vec3| u.dot(&axis).clamp(-1.0, 1.0).acos().to_degrees().clamp(MIN_ANGLE_DEG, MAX_ANGLE_DEG);
        p.angle1_deg = angle(&h1.direction);
        p.angle2_deg = angle(&h2.direction);
        found.push((score(&p), p));
    }
    if !found.is_empty() {
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        return found.into_iter().map(|(_, p)| p).collect();
    }

    let reference = any_perpendicular(&axis);
    base.set_frame(&BifurcationParams::frame_from_axes(axis, reference));
    let steps = cfg.roll_steps.max(1);
    let roll0 = base.roll_deg;
    let mut best = (f64::INFINITY, base);
    for k in 0..steps {
        let mut p = base;
        p.roll_deg = roll0 + 360.0 * k as f64 / steps as f64;
        let f = score(&p);
        if f < best.0 {
            best = (f, p);
        }
    }
    vec![best.1]
}

pub fn child_init(field: &LumenField, parent: &BifurcationParams, daughter: usize, cfg: &ExtractConfig) -> BifurcationParams {
    child_inits(field, parent, daughter, cfg).swap_remove(0)
}

/// Annealing attempts for the tracheal fit. It has a single starting guess
/// and everything below depends on it, so an unconverged fit is retried with
/// fresh seeds; a rough guess lands in a collapsed-daughter minimum on
/// roughly two seeds in five.
pub const TRACHEA_ATTEMPTS: usize = 6;

struct Task {
    code: BranchCode,
    inits: Vec<BifurcationParams>,
    /// Stop at the first converged start instead of trying them all.
    first_converged: bool,
}

/// Fits from each start and keeps the best: converged first, then lowest
/// residual, then earliest start.
fn run_fit(field: &LumenField, task: &Task, cfg: &ExtractConfig) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    for (k, init) in task.inits.iter().enumerate() {
        let mut opt = cfg.optimizer;
        opt.seed = cfg.optimizer.seed ^ code_hash(&task.code) ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let fit = fit_bifurcation(field, init, &opt)?;
        let done = task.first_converged && fit.converged;
        let better = match &best {
            None => true,
            Some(b) => (fit.converged, -fit.residual) > (b.converged, -b.residual),
        };
        if better {
            best = Some(fit);
        }
        if done {
            break;
        }
    }
    best.ok_or_else(|| Error::Config("no starting guess".into()))
}

pub fn extract_tree(volume: &Volume, trachea_init: &BifurcationParams, cfg: &ExtractConfig) -> Result<AirwayTree> {
    let field = LumenField::from_volume(volume)?;
    extract_tree_from_field(&field, trachea_init, cfg)
}

pub fn extract_tree_from_field(
    field: &LumenField,
    trachea_init: &BifurcationParams,
    cfg: &ExtractConfig,
) -> Result<AirwayTree> {
    cfg.optimizer.validate()?;
    let [sx, sy, _] = field.spacing();
    let min_diameter = cfg.min_diameter_voxels * sx.min(sy);
    let mut tree = AirwayTree::default();

    let mut level = vec![Task {
        code: BranchCode::root(),
        inits: vec![*trachea_init; TRACHEA_ATTEMPTS],
        first_converged: true,
    }];
    let mut first = true;
    while !level.is_empty() {
        #[cfg(feature = "parallel")]
        let results: Vec<Result<FitResult>> = level.par_iter().map(|t| run_fit(field, t, cfg)).collect();
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<FitResult>> = level.iter().map(|t| run_fit(field, t, cfg)).collect();

        let mut next = Vec::new();
        for (task, result) in level.iter().zip(results) {
            let fit = match result {
                Ok(f) => f,
                Err(e) if first => return Err(Error::TracheaFit(e.to_string())),
                Err(e) => return Err(e),
            };
            let params = normalize(fit.params);
            // A child whose fitted parent is already below resolution is not
            // a resolvable bifurcation.
            if !first && params.parent_diameter_mm < min_diameter {
                continue;
            }
            tree.entries.insert(
                task.code.clone(),
                TreeEntry {
                    params,
                    residual: fit.residual,
                    converged: fit.converged,
                },
            );
            if !fit.converged || task.code.generation() >= cfg.max_generation {
                continue;
            }
            for i in 0..2 {
                if params.diameters()[i] >= min_diameter {
                    next.push(Task {
                        code: task.code.child(i as u8 + 1),
                        inits: child_inits(field, &params, i, cfg)
                            .into_iter()
                            .take(cfg.starts.max(1))
                            .collect(),
                        first_converged: false,
                    });
                }
            }
        }
        first = false;
        level = next;
    }
    Ok(tree)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AngleList {
    pub angles: Vec<(AngleCode, f64)>,
    /// Codes of the complete binary tree in the requested generations that
    /// have no converged fit.
    pub missing: Vec<AngleCode>,
}

impl AngleList {
    pub fn get(&self, code: &AngleCode) -> Option<f64> {
        self.angles.iter().find(|(c, _)| c == code).map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("code,degrees\n");
        for (c, v) in &self.angles {
            out.push_str(&format!("{c},{v}\n"));
        }
        out
    }
}

/// Angles of converged bifurcations whose generation is in `generations`,
/// ordered by code.
pub fn collect_angles(tree: &AirwayTree, generations: &BTreeSet<usize>) -> AngleList {
    let mut out = AngleList::default();
    for (code, entry) in &tree.entries {
        if entry.converged && generations.contains(&code.generation()) {
            let [a1, a2] = entry.angles_deg();
            out.angles.push((code.angle(1), a1));
            out.angles.push((code.angle(2), a2));
        }
    }
    for &g in generations {
        for code in BranchCode::all_of_generation(g) {
            if !tree.entries.get(&code).is_some_and(|e| e.converged) {
                out.missing.push(code.angle(1));
                out.missing.push(code.angle(2));
            }
        }
    }
    out.missing.sort();
    out
}
