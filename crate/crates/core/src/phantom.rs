//! Synthetic airway trees with exact ground truth.
//!
//! Each branch is a straight capsule (a cylinder with spherical ends, so
//! consecutive branches join without gaps), except that a branch with
//! children is cut flat at its distal end: the joint is then formed by the
//! daughters alone, as in the bifurcation model. Every branch record is keyed by
//! the code of the bifurcation at its distal end: the trachea is `B1`, its
//! daughters `B11` and `B12`, and so on. A branch with no children is a leaf.
//!
//! The rasterized body is the lumen, a wall band of `wall_mm` around it, and
//! at least a one-voxel shell (the 26-neighbour dilation of the lumen), so
//! the lumen is always sealed from the exterior.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bifurcation::code::BranchCode;
use crate::bifurcation::fit::MIN_CURVATURE_FRACTION;
use crate::bifurcation::model::{rotate_about, segment_distance, BifurcationParams, Vec3};
use crate::error::{Error, Result};
use crate::volume::{Hu, Volume, VoxelCoord};

pub const MAX_GENERATIONS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub code: BranchCode,
    pub length_mm: f64,
    pub diameter_mm: f64,
    /// Angle to the parent branch's direction; ignored for the trachea.
    #[serde(default)]
    pub angle_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub branches: Vec<BranchSpec>,
    /// Deepest bifurcation generation present.
    pub generations: usize,
    pub spacing_mm: [f64; 3],
    #[serde(default = "default_lumen")]
    pub lumen_hu: Hu,
    #[serde(default = "default_tissue")]
    pub tissue_hu: Hu,
    #[serde(default = "default_exterior")]
    pub exterior_hu: Hu,
    #[serde(default)]
    pub wall_mm: f64,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_direction")]
    pub trachea_direction: [f64; 3],
    #[serde(default = "default_reference")]
    pub trachea_reference: [f64; 3],
    /// Turn of each child's branching plane about its own axis.
    #[serde(default = "default_roll")]
    pub roll_deg: f64,
    /// Explicit grid size; otherwise the grid is fitted around the tree.
    #[serde(default)]
    pub dims: Option<[usize; 3]>,
    #[serde(default = "default_margin")]
    pub margin_voxels: usize,
}

fn default_lumen() -> Hu {
    -1000
}
fn default_tissue() -> Hu {
    40
}
fn default_exterior() -> Hu {
    -850
}
fn default_direction() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}
fn default_reference() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}
fn default_roll() -> f64 {
    90.0
}
fn default_margin() -> usize {
    4
}

/// Per-generation diameter ratio of the major daughter.
pub const DEFAULT_TAPER: f64 = 0.78;
/// Minor daughter diameter relative to the major one.
pub const MINOR_RATIO: f64 = 0.8;
pub const TRACHEA_DIAMETER_MM: f64 = 12.0;
pub const TRACHEA_LENGTH_MM: f64 = 40.0;
pub const LEAF_MAJOR_MM: f64 = 2.5;
pub const LEAF_MINOR_MM: f64 = 2.0;
pub const LEAF_LENGTH_MM: f64 = 10.0;
/// Internal branch length in diameters.
pub const LENGTH_DIAMETERS: f64 = 3.0;

impl PhantomSpec {
    fn with_branches(branches: Vec<BranchSpec>, generations: usize, spacing_mm: [f64; 3]) -> Self {
        Self {
            branches,
            generations,
            spacing_mm,
            lumen_hu: default_lumen(),
            tissue_hu: default_tissue(),
            exterior_hu: default_exterior(),
            wall_mm: 0.0,
            noise_sd: 0.0,
            rng_seed: 0,
            trachea_direction: default_direction(),
            trachea_reference: default_reference(),
            roll_deg: default_roll(),
            dims: None,
            margin_voxels: default_margin(),
        }
    }

    pub fn single_tube(diameter_mm: f64, length_mm: f64, spacing_mm: [f64; 3]) -> Self {
        let trachea = BranchSpec {
            code: BranchCode::root(),
            length_mm,
            diameter_mm,
            angle_deg: 0.0,
        };
        Self::with_branches(vec![trachea], 0, spacing_mm)
    }

    /// Trachea splitting once into two leaves.
    pub fn single_bifurcation(angle1_deg: f64, angle2_deg: f64, spacing_mm: [f64; 3]) -> Self {
        let root = BranchCode::root();
        let d1 = TRACHEA_DIAMETER_MM * DEFAULT_TAPER;
        let d2 = d1 * MINOR_RATIO;
        let branches = vec![
            BranchSpec {
                code: root.clone(),
                length_mm: TRACHEA_LENGTH_MM,
                diameter_mm: TRACHEA_DIAMETER_MM,
                angle_deg: 0.0,
            },
            BranchSpec {
                code: root.child(1),
                length_mm: LENGTH_DIAMETERS * d1,
                diameter_mm: d1,
                angle_deg: angle1_deg,
            },
            BranchSpec {
                code: root.child(2),
                length_mm: LENGTH_DIAMETERS * d2,
                diameter_mm: d2,
                angle_deg: angle2_deg,
            },
        ];
        Self::with_branches(branches, 1, spacing_mm)
    }

    /// Bifurcations in generations 1-4 except below `B122`, whose daughters
    /// `B1221`/`B1222` are leaves: 13 bifurcations in all. Diameters taper
    /// by [`DEFAULT_TAPER`] per generation; leaves are 2.5/2.0 mm. Angles are
    /// drawn uniformly from [20°, 60°], redrawn until no two unrelated
    /// branches collide.
    pub fn four_generation(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let spec = Self::four_generation_draw(&mut rng, seed);
            if spec.check_clearance().is_ok() {
                return spec;
            }
        }
        panic!("could not draw a collision-free four-generation tree");
    }

    fn four_generation_draw(rng: &mut ChaCha8Rng, seed: u64) -> Self {
        let leaf_parents: [BranchCode; 1] = ["B122".parse().expect("static code")];
        let mut branches = vec![BranchSpec {
            code: BranchCode::root(),
            length_mm: TRACHEA_LENGTH_MM,
            diameter_mm: TRACHEA_DIAMETER_MM,
            angle_deg: 0.0,
        }];
        let mut frontier = vec![(BranchCode::root(), TRACHEA_DIAMETER_MM)];
        while let Some((code, d)) = frontier.pop() {
            let leaves = code.generation() == 4 || leaf_parents.contains(&code);
            let (d1, d2) = if leaves {
                (LEAF_MAJOR_MM, LEAF_MINOR_MM)
            } else {
                (d * DEFAULT_TAPER, d * DEFAULT_TAPER * MINOR_RATIO)
            };
            for (digit, dc) in [(1u8, d1), (2u8, d2)] {
                let child = code.child(digit);
                let angle = rng.random_range(20.0..=60.0);
                branches.push(BranchSpec {
                    code: child.clone(),
                    length_mm: if leaves { LEAF_LENGTH_MM } else { LENGTH_DIAMETERS * dc },
                    diameter_mm: dc,
                    angle_deg: angle,
                });
                if !leaves {
                    frontier.push((child, dc));
                }
            }
        }
        branches.sort_by(|a, b| a.code.cmp(&b.code));
        let mut spec = Self::with_branches(branches, 4, [0.5, 0.5, 1.0]);
        spec.rng_seed = seed;
        spec
    }

    /// The four-generation tree on a fixed 512×512×300 grid.
    pub fn large(seed: u64) -> Self {
        let mut spec = Self::four_generation(seed);
        spec.dims = Some([512, 512, 300]);
        spec
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Phantom(m));
        if self.generations > MAX_GENERATIONS {
            return err(format!("depth {} exceeds {MAX_GENERATIONS}", self.generations));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return err(format!("spacing must be positive, got {:?}", self.spacing_mm));
        }
        if !(self.noise_sd >= 0.0) || !(self.wall_mm >= 0.0) {
            return err("noise_sd and wall_mm must be non-negative".into());
        }
        let map = self.branch_map()?;
        if !map.contains_key(&BranchCode::root()) {
            return err("missing trachea branch B1".into());
        }
        for (code, b) in &map {
            if !(b.length_mm > 0.0) || !(b.diameter_mm > 0.0) {
                return err(format!("{code}: length and diameter must be positive"));
            }
            if code.generation() > self.generations + 1 {
                return err(format!(
                    "{code} is deeper than the declared {} generations",
                    self.generations
                ));
            }
            if let Some(parent) = code.parent() {
                let Some(pb) = map.get(&parent) else {
                    return err(format!("{code}: parent {parent} missing"));
                };
                if b.diameter_mm > pb.diameter_mm {
                    return err(format!("{code}: diameter exceeds parent's"));
                }
                if !(b.angle_deg > 0.0 && b.angle_deg < 90.0) {
                    return err(format!("{code}: angle {} outside (0, 90)", b.angle_deg));
                }
            }
            let c1 = map.get(&code.child(1));
            let c2 = map.get(&code.child(2));
            match (c1, c2) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    if a.diameter_mm < b.diameter_mm {
                        return err(format!("{code}: daughter 1 must be the larger"));
                    }
                }
                _ => return err(format!("{code}: a bifurcation needs both daughters")),
            }
        }
        Ok(())
    }

    fn branch_map(&self) -> Result<BTreeMap<BranchCode, &BranchSpec>> {
        let mut map = BTreeMap::new();
        for b in &self.branches {
            if map.insert(b.code.clone(), b).is_some() {
                return Err(Error::Phantom(format!("duplicate branch {}", b.code)));
            }
        }
        Ok(map)
    }

    /// Branch axes in tree coordinates (trachea starting at the origin).
    pub fn layout(&self) -> Result<Vec<BranchGeom>> {
        self.validate()?;
        let map = self.branch_map()?;
        let d0 = Vec3::from(self.trachea_direction);
        if d0.norm() < 1e-12 {
            return Err(Error::Phantom("trachea_direction is zero".into()));
        }
        let d0 = d0.normalize();
        let frame = BifurcationParams::frame_from_axes(d0, Vec3::from(self.trachea_reference));
        let u0 = frame * Vec3::x();
        let roll = self.roll_deg.to_radians();
        let mut out = Vec::with_capacity(map.len());
        let root = map[&BranchCode::root()];
        let mut stack = vec![(root, Vec3::zeros(), d0, u0)];
        while let Some((b, start, dir, reference)) = stack.pop() {
            let end = start + dir * b.length_mm;
            let normal = dir.cross(&reference).normalize();
            for (digit, sign) in [(1u8, 1.0), (2u8, -1.0)] {
                if let Some(c) = map.get(&b.code.child(digit)) {
                    let a = c.angle_deg.to_radians();
                    let cdir = (dir * a.cos() + reference * (sign * a.sin())).normalize();
                    let in_plane = normal.cross(&cdir);
                    let cref = rotate_about(&in_plane, &cdir, roll);
                    stack.push((c, end, cdir, cref));
                }
            }
            out.push(BranchGeom {
                code: b.code.clone(),
                start,
                end,
                direction: dir,
                reference,
                diameter_mm: b.diameter_mm,
                length_mm: b.length_mm,
                angle_deg: if b.code.is_root() { 0.0 } else { b.angle_deg },
            });
        }
        out.sort_by(|a, b| a.code.cmp(&b.code));
        Ok(out)
    }

    /// Unrelated branches (neither parent/child nor siblings) must keep at
    /// least two voxels of tissue between their surfaces.
    pub fn check_clearance(&self) -> Result<()> {
        let geoms = self.layout()?;
        let gap = 2.0 * self.spacing_mm.iter().cloned().fold(0.0, f64::max) + 2.0 * self.wall_mm;
        for (i, a) in geoms.iter().enumerate() {
            for b in &geoms[i + 1..] {
                let related = a.code.parent().as_ref() == Some(&b.code)
                    || b.code.parent().as_ref() == Some(&a.code)
                    || (a.code.parent().is_some() && a.code.parent() == b.code.parent());
                if related {
                    continue;
                }
                let dist = segment_segment_distance(&a.start, &a.end, &b.start, &b.end);
                if dist < (a.diameter_mm + b.diameter_mm) / 2.0 + gap {
                    return Err(Error::Phantom(format!("branches {} and {} collide", a.code, b.code)));
                }
            }
        }
        Ok(())
    }
}

fn segment_segment_distance(a0: &Vec3, a1: &Vec3, b0: &Vec3, b1: &Vec3) -> f64 {
    // Dense sampling on both sides; the error is below 1/256 of the
    // segment length, far under the clearance margin.
    const N: usize = 256;
    let mut best = f64::INFINITY;
    for k in 0..=N {
        let t = k as f64 / N as f64;
        best = best
            .min(segment_distance(&(a0 + (a1 - a0) * t), b0, b1))
            .min(segment_distance(&(b0 + (b1 - b0) * t), a0, a1));
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchGeom {
    pub code: BranchCode,
    pub start: Vec3,
    pub end: Vec3,
    pub direction: Vec3,
    /// In-plane reference used to orient this branch's daughters.
    pub reference: Vec3,
    pub diameter_mm: f64,
    pub length_mm: f64,
    pub angle_deg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum VoxelClass {
    Exterior = 0,
    Wall = 1,
    Lumen = 2,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Planted parameters for every bifurcation.
    pub tree: BTreeMap<BranchCode, BifurcationParams>,
    /// Branch axes in volume millimetres.
    pub branches: Vec<BranchGeom>,
    pub lumen_voxels: usize,
    pub trachea_seed: VoxelCoord,
    pub parenchyma_seed: VoxelCoord,
    /// Starting guess for the tracheal fit: the planted `B1`'s position and
    /// axis with a generic shape, or a guess partway down a lone tube.
    pub trachea_init: BifurcationParams,
    #[serde(skip)]
    pub classes: Vec<VoxelClass>,
    /// Lumen voxel indices per branch; a voxel shared by several capsules
    /// belongs to the first in code order.
    #[serde(skip)]
    pub branch_voxels: BTreeMap<BranchCode, Vec<usize>>,
}

impl GroundTruth {
    pub fn class_at(&self, index: usize) -> VoxelClass {
        self.classes[index]
    }

    pub fn count_class(&self, class: VoxelClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn branch(&self, code: &BranchCode) -> Option<&BranchGeom> {
        self.branches.iter().find(|b| &b.code == code)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn carina_radius(parent_diameter: f64) -> f64 {
    0.1 * parent_diameter
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, GroundTruth)> {
    let mut geoms = spec.layout()?;
    let sp = spec.spacing_mm;
    let shell = spec.wall_mm + sp.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for g in &geoms {
        let r = g.diameter_mm / 2.0 + shell;
        for p in [g.start, g.end] {
            lo = lo.inf(&p.add_scalar(-r));
            hi = hi.sup(&p.add_scalar(r));
        }
    }
    let margin = spec.margin_voxels.max(1) as f64;
    let (dims, offset) = match spec.dims {
        None => {
            let mut dims = [0usize; 3];
            let mut offset = Vec3::zeros();
            for a in 0..3 {
                dims[a] = ((hi[a] - lo[a]) / sp[a]).ceil() as usize + 2 * margin as usize + 1;
                offset[a] = margin * sp[a] - lo[a];
            }
            (dims, offset)
        }
        Some(dims) => {
            let mut offset = Vec3::zeros();
            for a in 0..3 {
                let extent = (dims[a] as f64 - 1.0) * sp[a];
                offset[a] = extent / 2.0 - (lo[a] + hi[a]) / 2.0;
                if lo[a] + offset[a] < margin * sp[a] || hi[a] + offset[a] > extent - margin * sp[a] {
                    return Err(Error::Phantom(format!(
                        "tree exceeds volume bounds on axis {} ({:.1} mm needed, {:.1} mm available)",
                        ['x', 'y', 'z'][a],
                        hi[a] - lo[a] + 2.0 * margin * sp[a],
                        extent
                    )));
                }
            }
            (dims, offset)
        }
    };
    for g in &mut geoms {
        g.start += offset;
        g.end += offset;
    }

    let mut volume = Volume::filled(dims, sp, spec.exterior_hu)?;
    let n = volume.len();
    let mut classes = vec![VoxelClass::Exterior; n];
    let mut owner: Vec<u16> = vec![u16::MAX; n];

    let has_children: Vec<bool> = geoms
        .iter()
        .map(|g| geoms.iter().any(|h| h.code.parent().as_ref() == Some(&g.code)))
        .collect();
    for (bi, g) in geoms.iter().enumerate() {
        let r = g.diameter_mm / 2.0;
        let axis = g.end - g.start;
        let len2 = axis.norm_squared();
        let rw = r + spec.wall_mm;
        let mut range = [(0usize, 0usize); 3];
        for a in 0..3 {
            let lo_mm = g.start[a].min(g.end[a]) - rw;
            let hi_mm = g.start[a].max(g.end[a]) + rw;
            range[a] = (
                (lo_mm / sp[a]).floor().max(0.0) as usize,
                ((hi_mm / sp[a]).ceil() as usize).min(dims[a] - 1),
            );
        }
        for z in range[2].0..=range[2].1 {
            for y in range[1].0..=range[1].1 {
                for x in range[0].0..=range[0].1 {
                    let p = Vec3::new(x as f64 * sp[0], y as f64 * sp[1], z as f64 * sp[2]);
                    if has_children[bi] && (p - g.start).dot(&axis) > len2 {
                        continue;
                    }
                    let d = segment_distance(&p, &g.start, &g.end);
                    let i = volume.index(x, y, z);
                    if d <= r {
                        classes[i] = VoxelClass::Lumen;
                        if owner[i] == u16::MAX {
                            owner[i] = bi as u16;
                        }
                    } else if d <= rw && classes[i] == VoxelClass::Exterior {
                        classes[i] = VoxelClass::Wall;
                    }
                }
            }
        }
    }

    // Seal with a one-voxel shell.
    for i in 0..n {
        if classes[i] != VoxelClass::Lumen {
            continue;
        }
        let c = volume.coord(i);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (x, y, z) = (c.x as i64 + dx, c.y as i64 + dy, c.z as i64 + dz);
                    if x < 0 || y < 0 || z < 0 || x >= dims[0] as i64 || y >= dims[1] as i64 || z >= dims[2] as i64 {
                        return Err(Error::Phantom("lumen touches the volume boundary".into()));
                    }
                    let j = volume.index(x as usize, y as usize, z as usize);
                    if classes[j] == VoxelClass::Exterior {
                        classes[j] = VoxelClass::Wall;
                    }
                }
            }
        }
    }

    let noise = if spec.noise_sd > 0.0 {
        Some(Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Phantom(e.to_string()))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    for (v, c) in volume.intensities_mut().iter_mut().zip(&classes) {
        let base = match c {
            VoxelClass::Exterior => spec.exterior_hu,
            VoxelClass::Wall => spec.tissue_hu,
            VoxelClass::Lumen => spec.lumen_hu,
        };
        *v = match &noise {
            Some(dist) => (base as f64 + dist.sample(&mut rng))
                .round()
                .clamp(Hu::MIN as f64, Hu::MAX as f64) as Hu,
            None => base,
        };
    }

    let mut branch_voxels: BTreeMap<BranchCode, Vec<usize>> =
        geoms.iter().map(|g| (g.code.clone(), Vec::new())).collect();
    let mut lumen_voxels = 0;
    for (i, &o) in owner.iter().enumerate() {
        if o != u16::MAX {
            lumen_voxels += 1;
            branch_voxels
                .get_mut(&geoms[o as usize].code)
                .expect("owner is a branch")
                .push(i);
        }
    }

    let by_code: BTreeMap<&BranchCode, &BranchGeom> = geoms.iter().map(|g| (&g.code, g)).collect();
    let mut tree = BTreeMap::new();
    for g in &geoms {
        let (Some(c1), Some(c2)) = (by_code.get(&g.code.child(1)), by_code.get(&g.code.child(2))) else {
            continue;
        };
        // Straight capsules meet at a sharp joint: the tightest bend the model allows.
        let rc = MIN_CURVATURE_FRACTION * c1.diameter_mm.max(c2.diameter_mm);
        let mut p = BifurcationParams {
            parent_length_mm: g.length_mm,
            parent_diameter_mm: g.diameter_mm,
            angle1_deg: c1.angle_deg,
            curvature_radius1_mm: rc,
            diameter1_mm: c1.diameter_mm,
            angle2_deg: c2.angle_deg,
            curvature_radius2_mm: rc,
            diameter2_mm: c2.diameter_mm,
            x_mm: 0.0,
            y_mm: 0.0,
            z_mm: 0.0,
            yaw_deg: 0.0,
            pitch_deg: 0.0,
            roll_deg: 0.0,
            carina_radius_mm: carina_radius(g.diameter_mm),
        };
        p.set_branch_point(g.end);
        p.set_frame(&BifurcationParams::frame_from_axes(g.direction, g.reference));
        tree.insert(g.code.clone(), p);
    }

    let trachea = by_code[&BranchCode::root()];
    let trachea_init = match tree.get(&BranchCode::root()) {
        // A rough manual placement: right place and axis, generic shape.
        Some(t) => {
            let mut p = *t;
            p.angle1_deg = 35.0;
            p.angle2_deg = 35.0;
            p.diameter1_mm = t.parent_diameter_mm * DEFAULT_TAPER;
            p.diameter2_mm = p.diameter1_mm * MINOR_RATIO;
            p.roll_deg += 15.0;
            p.set_branch_point(t.branch_point() - t.parent_axis() * 2.0);
            p
        }
        None => {
            // No planted split: a plausible guess partway down the tube.
            let d = trachea.diameter_mm * DEFAULT_TAPER;
            let mut p = BifurcationParams {
                parent_length_mm: trachea.length_mm * 0.5,
                parent_diameter_mm: trachea.diameter_mm,
                angle1_deg: 30.0,
                curvature_radius1_mm: d / 2.0,
                diameter1_mm: d,
                angle2_deg: 30.0,
                curvature_radius2_mm: d / 2.0,
                diameter2_mm: d,
                x_mm: 0.0,
                y_mm: 0.0,
                z_mm: 0.0,
                yaw_deg: 0.0,
                pitch_deg: 0.0,
                roll_deg: 0.0,
                carina_radius_mm: carina_radius(trachea.diameter_mm),
            };
            p.set_branch_point(trachea.start + trachea.direction * (trachea.length_mm * 0.6));
            p.set_frame(&BifurcationParams::frame_from_axes(trachea.direction, trachea.reference));
            p
        }
    };

    let seed_point = trachea.start + trachea.direction * (trachea.length_mm * 0.25);
    let trachea_seed = nearest_of_class(&volume, &classes, seed_point, VoxelClass::Lumen)
        .ok_or_else(|| Error::Phantom("trachea has no lumen voxels".into()))?;
    if classes[0] != VoxelClass::Exterior {
        return Err(Error::Phantom("volume corner is not exterior".into()));
    }
    let parenchyma_seed = exterior_seed(&classes, dims, PARENCHYMA_SEED_CLEARANCE).unwrap_or_default();

    let truth = GroundTruth {
        tree,
        branches: geoms,
        lumen_voxels,
        trachea_seed,
        parenchyma_seed,
        trachea_init,
        classes,
        branch_voxels,
    };
    Ok((volume, truth))
}

fn nearest_of_class(volume: &Volume, classes: &[VoxelClass], p: Vec3, class: VoxelClass) -> Option<VoxelCoord> {
    let sp = volume.spacing();
    let dims = volume.dims();
    let guess: Vec<usize> = (0..3)
        .map(|a| ((p[a] / sp[a]).round().max(0.0) as usize).min(dims[a] - 1))
        .collect();
    let c = VoxelCoord::new(guess[0], guess[1], guess[2]);
    if classes[volume.index(c.x, c.y, c.z)] == class {
        return Some(c);
    }
    (0..volume.len())
        .filter(|&i| classes[i] == class)
        .min_by(|&a, &b| {
            let da = (Vec3::from(volume.position_mm(volume.coord(a))) - p).norm();
            let db = (Vec3::from(volume.position_mm(volume.coord(b))) - p).norm();
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .map(|i| volume.coord(i))
}

/// Open a hole in a wall: every non-air voxel within 6-connected (city
/// block) distance `radius` of `location` is set to `lumen_hu`. `location`
/// itself must be non-air and face-adjacent to air. Returns the converted
/// voxel indices in ascending order.
pub fn inject_pinhole(
    volume: &mut Volume,
    location: VoxelCoord,
    radius: u32,
    lumen_hu: Hu,
    threshold: Hu,
) -> Result<Vec<usize>> {
    let centre = volume.check_coord(location)?;
    let dims = volume.dims();
    let air = |v: &Volume, i: usize| v.intensities()[i] < threshold;
    if air(volume, centre) {
        return Err(Error::Phantom(format!("{location:?} is already air, not a wall voxel")));
    }
    let neighbours = face_neighbours(location, dims);
    if !neighbours.iter().any(|&c| air(volume, volume.index(c.x, c.y, c.z))) {
        return Err(Error::Phantom(format!("{location:?} is not adjacent to lumen")));
    }
    let r = radius as i64;
    let mut converted = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx.abs() + dy.abs() + dz.abs() > r {
                    continue;
                }
                let (x, y, z) = (location.x as i64 + dx, location.y as i64 + dy, location.z as i64 + dz);
                if x < 0 || y < 0 || z < 0 || x >= dims[0] as i64 || y >= dims[1] as i64 || z >= dims[2] as i64 {
                    continue;
                }
                let i = volume.index(x as usize, y as usize, z as usize);
                if !air(volume, i) {
                    converted.push(i);
                }
            }
        }
    }
    converted.sort_unstable();
    for &i in &converted {
        volume.intensities_mut()[i] = lumen_hu;
    }
    Ok(converted)
}

fn face_neighbours(c: VoxelCoord, dims: [usize; 3]) -> Vec<VoxelCoord> {
    let mut out = Vec::with_capacity(6);
    let p = [c.x, c.y, c.z];
    for a in 0..3 {
        for up in [false, true] {
            let mut q = p;
            if up {
                if q[a] + 1 >= dims[a] {
                    continue;
                }
                q[a] += 1;
            } else {
                if q[a] == 0 {
                    continue;
                }
                q[a] -= 1;
            }
            out.push(VoxelCoord::new(q[0], q[1], q[2]));
        }
    }
    out
}

/// Clearance of the parenchyma seed: wide enough for the default hole gate
/// of the parenchyma fill to accept it.
const PARENCHYMA_SEED_CLEARANCE: usize = 2;

/// First exterior voxel, in index order, whose cube of half-width `r` lies
/// inside the grid and is all exterior.
fn exterior_seed(classes: &[VoxelClass], dims: [usize; 3], r: usize) -> Option<VoxelCoord> {
    let [nx, ny, nz] = dims;
    if nx <= 2 * r || ny <= 2 * r || nz <= 2 * r {
        return None;
    }
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    for z in r..nz - r {
        for y in r..ny - r {
            for x in r..nx - r {
                let clear = (z - r..=z + r).all(|zz| {
                    (y - r..=y + r).all(|yy| (x - r..=x + r).all(|xx| classes[idx(xx, yy, zz)] == VoxelClass::Exterior))
                });
                if clear {
                    return Some(VoxelCoord::new(x, y, z));
                }
            }
        }
    }
    None
}

/// A wall voxel of `branch` with lumen on one side and exterior on the
/// directly opposite side, so converting it alone opens a face-connected
/// leak. Picks the median candidate in index order.
pub fn find_pinhole_site(truth: &GroundTruth, dims: [usize; 3], branch: &BranchCode) -> Option<VoxelCoord> {
    let voxels = truth.branch_voxels.get(branch)?;
    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    let mut sites = Vec::new();
    for &i in voxels {
        let p = [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
        for a in 0..3 {
            for dir in [-1i64, 1] {
                let w = p[a] as i64 + dir;
                let e = p[a] as i64 + 2 * dir;
                if e < 0 || e >= dims[a] as i64 {
                    continue;
                }
                let mut pw = p;
                pw[a] = w as usize;
                let mut pe = p;
                pe[a] = e as usize;
                if truth.classes[idx(pw[0], pw[1], pw[2])] == VoxelClass::Wall
                    && truth.classes[idx(pe[0], pe[1], pe[2])] == VoxelClass::Exterior
                {
                    sites.push(idx(pw[0], pw[1], pw[2]));
                }
            }
        }
    }
    sites.sort_unstable();
    sites.dedup();
    let i = *sites.get(sites.len() / 2)?;
    Some(VoxelCoord::new(i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])))
}
