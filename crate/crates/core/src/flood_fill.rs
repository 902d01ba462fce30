//! Limited 3D flood fill with front tracking, a voxel cap, hole gating and
//! manual plugs.
//!
//! The fill advances in breadth-first layers: every voxel at front distance
//! `d` is labeled before any voxel at `d + 1`, and within a layer voxels are
//! visited in ascending linear index (z, then y, then x). When the cap binds
//! partway through a layer, the lowest-index voxels of that layer win.
//!
//! Hole gating with `hole_size = s > 0` restricts the fill to a
//! reconstruction of the air mask:
//!
//! 1. *core*: voxels whose whole Euclidean ball of radius `s` (voxel units)
//!    is admissible air; only the core component connected to the seed is kept;
//! 2. the core component is grown back by at most `s` face-connected steps
//!    through admissible air.
//!
//! Openings narrower than `2s + 1` voxels cannot carry the core, and the
//! `s`-step regrowth stops short of the far side of a wall, so pinholes do
//! not leak while lumen voxels next to the wall are restored.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Hu, Label, Volume, VoxelCoord, DEFAULT_AIR_THRESHOLD};

pub const MAX_HOLE_SIZE: u32 = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    #[default]
    Six,
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillConfig {
    pub seed: VoxelCoord,
    pub target_label: Label,
    pub max_voxels: usize,
    pub hole_size: u32,
    pub connectivity: Connectivity,
    pub hu_threshold: Hu,
}

impl FillConfig {
    pub fn new(seed: VoxelCoord, target_label: Label) -> Self {
        Self {
            seed,
            target_label,
            max_voxels: usize::MAX,
            hole_size: 0,
            connectivity: Connectivity::Six,
            hu_threshold: DEFAULT_AIR_THRESHOLD,
        }
    }

    pub fn with_cap(mut self, max_voxels: usize) -> Self {
        self.max_voxels = max_voxels;
        self
    }

    pub fn with_hole_size(mut self, s: u32) -> Self {
        self.hole_size = s;
        self
    }

    pub fn with_connectivity(mut self, c: Connectivity) -> Self {
        self.connectivity = c;
        self
    }

    pub fn with_threshold(mut self, t: Hu) -> Self {
        self.hu_threshold = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_voxels == 0 {
            return Err(Error::Config("max_voxels must be at least 1".into()));
        }
        if self.hole_size > MAX_HOLE_SIZE {
            return Err(Error::Config(format!(
                "hole size {} exceeds {MAX_HOLE_SIZE}",
                self.hole_size
            )));
        }
        if !matches!(self.target_label, Label::Lumen | Label::Parenchyma) {
            return Err(Error::Config(format!(
                "fill target must be Lumen or Parenchyma, got {:?}",
                self.target_label
            )));
        }
        Ok(())
    }
}

/// Inclusive axis-aligned voxel box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlugBox {
    pub lo: VoxelCoord,
    pub hi: VoxelCoord,
}

impl PlugBox {
    pub fn new(lo: VoxelCoord, hi: VoxelCoord) -> Result<Self> {
        if lo.x > hi.x || lo.y > hi.y || lo.z > hi.z {
            return Err(Error::Config(format!("plug box has lo > hi: {lo:?} {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn voxel(c: VoxelCoord) -> Self {
        Self { lo: c, hi: c }
    }

    pub fn contains(&self, c: VoxelCoord) -> bool {
        (self.lo.x..=self.hi.x).contains(&c.x)
            && (self.lo.y..=self.hi.y).contains(&c.y)
            && (self.lo.z..=self.hi.z).contains(&c.z)
    }

    pub fn check(&self, volume: &Volume) -> Result<()> {
        if self.lo.x > self.hi.x || self.lo.y > self.hi.y || self.lo.z > self.hi.z {
            return Err(Error::Config(format!("plug box has lo > hi: {self:?}")));
        }
        volume.check_coord(self.hi).map(|_| ())
    }
}

/// Parses `x0:x1,y0:y1,z0:z1`.
impl FromStr for PlugBox {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("plug must look like x0:x1,y0:y1,z0:z1, got {s:?}"));
        let ranges: Vec<(usize, usize)> = s
            .split(',')
            .map(|part| {
                let (a, b) = part.trim().split_once(':').ok_or_else(bad)?;
                Ok((
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                ))
            })
            .collect::<Result<_>>()?;
        if ranges.len() != 3 {
            return Err(bad());
        }
        PlugBox::new(
            VoxelCoord::new(ranges[0].0, ranges[1].0, ranges[2].0),
            VoxelCoord::new(ranges[0].1, ranges[1].1, ranges[2].1),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Exhausted,
    CapReached,
    SeedInvalid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: VoxelCoord,
    pub hi: VoxelCoord,
}

impl BoundingBox {
    fn point(c: VoxelCoord) -> Self {
        Self { lo: c, hi: c }
    }

    fn extend(&mut self, c: VoxelCoord) {
        self.lo.x = self.lo.x.min(c.x);
        self.lo.y = self.lo.y.min(c.y);
        self.lo.z = self.lo.z.min(c.z);
        self.hi.x = self.hi.x.max(c.x);
        self.hi.y = self.hi.y.max(c.y);
        self.hi.z = self.hi.z.max(c.z);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillReport {
    pub voxels_filled: usize,
    pub front_layers: usize,
    pub stop_reason: StopReason,
    pub filled_bounding_box: Option<BoundingBox>,
}

impl FillReport {
    fn seed_invalid() -> Self {
        Self {
            voxels_filled: 0,
            front_layers: 0,
            stop_reason: StopReason::SeedInvalid,
            filled_bounding_box: None,
        }
    }
}

/// Labels every voxel of every box as [`Label::Plug`] and returns how many
/// voxels changed label. All boxes are range-checked before any is applied.
pub fn apply_plugs(volume: &mut Volume, plugs: &[PlugBox]) -> Result<usize> {
    for p in plugs {
        p.check(volume)?;
    }
    let mut marked = 0;
    for p in plugs {
        for z in p.lo.z..=p.hi.z {
            for y in p.lo.y..=p.hi.y {
                for x in p.lo.x..=p.hi.x {
                    let i = volume.index(x, y, z);
                    let l = &mut volume.labels_mut()[i];
                    if *l != Label::Plug {
                        *l = Label::Plug;
                        marked += 1;
                    }
                }
            }
        }
    }
    Ok(marked)
}

const SEEN: u8 = 1;
const CORE_KNOWN: u8 = 1 << 1;
const CORE: u8 = 1 << 2;
const COMPONENT: u8 = 1 << 3;
const REGION: u8 = 1 << 4;

struct Grid<'a> {
    dims: [usize; 3],
    intensities: &'a [Hu],
    labels: &'a [Label],
    threshold: Hu,
}

impl Grid<'_> {
    #[inline]
    fn passable(&self, i: usize) -> bool {
        self.intensities[i] < self.threshold && self.labels[i] == Label::Unlabeled
    }

    #[inline]
    fn split(&self, i: usize) -> [i64; 3] {
        let [nx, ny, _] = self.dims;
        [(i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64]
    }

    #[inline]
    fn offset(&self, i: usize, d: [i64; 3]) -> Option<usize> {
        let [x, y, z] = self.split(i);
        let (x, y, z) = (x + d[0], y + d[1], z + d[2]);
        let [nx, ny, nz] = self.dims;
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            return None;
        }
        Some(x as usize + nx * (y as usize + ny * z as usize))
    }
}

fn ball_offsets(radius: u32) -> Vec<[i64; 3]> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy + dz * dz <= r * r {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Marks `REGION` on every voxel the gated fill may enter.
fn build_gate_region(grid: &Grid<'_>, flags: &mut [u8], seed: usize, s: u32, conn: &[[i64; 3]]) {
    let ball = ball_offsets(s);
    let is_core = |flags: &mut [u8], i: usize| -> bool {
        if flags[i] & CORE_KNOWN == 0 {
            let core = grid.passable(i)
                && ball
                    .iter()
                    .all(|&d| grid.offset(i, d).is_some_and(|j| grid.passable(j)));
            flags[i] |= CORE_KNOWN | if core { CORE } else { 0 };
        }
        flags[i] & CORE != 0
    };

    // core component reachable from the seed
    let mut component = vec![seed];
    is_core(flags, seed);
    flags[seed] |= COMPONENT;
    let mut head = 0;
    while head < component.len() {
        let i = component[head];
        head += 1;
        for &d in conn {
            if let Some(j) = grid.offset(i, d) {
                if flags[j] & COMPONENT == 0 && is_core(flags, j) {
                    flags[j] |= COMPONENT;
                    component.push(j);
                }
            }
        }
    }

    // regrow by at most `s` face steps through passable voxels, starting
    // from core voxels on the component's surface
    let faces = Connectivity::Six.offsets();
    let in_core_component = |f: u8| f & (COMPONENT | CORE) == (COMPONENT | CORE);
    let mut frontier: Vec<usize> = Vec::new();
    for &i in &component {
        if !in_core_component(flags[i]) {
            continue;
        }
        flags[i] |= REGION;
        let interior = faces
            .iter()
            .all(|&d| grid.offset(i, d).is_some_and(|j| in_core_component(flags[j])));
        if !interior {
            frontier.push(i);
        }
    }
    for _ in 0..s {
        let mut next = Vec::new();
        for &i in &frontier {
            for &d in &faces {
                if let Some(j) = grid.offset(i, d) {
                    if flags[j] & REGION == 0 && grid.passable(j) {
                        flags[j] |= REGION;
                        next.push(j);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    for &i in &component {
        flags[i] |= REGION;
    }
}

/// Runs the fill, invoking `on_layer(d, voxels)` with the voxels labeled at
/// front distance `d` (sorted ascending by linear index).
pub fn limited_flood_fill_observed(
    volume: &mut Volume,
    config: &FillConfig,
    plugs: &[PlugBox],
    mut on_layer: impl FnMut(usize, &[usize]),
) -> Result<FillReport> {
    config.validate()?;
    apply_plugs(volume, plugs)?;

    let seed = config.seed;
    if !volume.contains(seed) {
        return Ok(FillReport::seed_invalid());
    }
    let seed_i = volume.index(seed.x, seed.y, seed.z);
    let dims = volume.dims();
    let conn = config.connectivity.offsets();
    let target = config.target_label;
    let cap = config.max_voxels;

    let mut flags = vec![0u8; volume.len()];
    {
        let grid = Grid {
            dims,
            intensities: volume.intensities(),
            labels: volume.labels(),
            threshold: config.hu_threshold,
        };
        if !grid.passable(seed_i) {
            return Ok(FillReport::seed_invalid());
        }
        if config.hole_size > 0 {
            build_gate_region(&grid, &mut flags, seed_i, config.hole_size, &conn);
        }
    }
    let gated = config.hole_size > 0;

    let (intensities, labels) = volume.split_mut();
    let threshold = config.hu_threshold;
    let grid_dims = dims;
    let admissible = |labels: &[Label], flags: &[u8], j: usize| -> bool {
        if gated {
            flags[j] & REGION != 0 && labels[j] == Label::Unlabeled
        } else {
            intensities[j] < threshold && labels[j] == Label::Unlabeled
        }
    };
    let offset = |i: usize, d: [i64; 3]| -> Option<usize> {
        let [nx, ny, nz] = grid_dims;
        let x = (i % nx) as i64 + d[0];
        let y = ((i / nx) % ny) as i64 + d[1];
        let z = (i / (nx * ny)) as i64 + d[2];
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            return None;
        }
        Some(x as usize + nx * (y as usize + ny * z as usize))
    };
    let coord_of = |i: usize| -> VoxelCoord {
        let [nx, ny, _] = grid_dims;
        VoxelCoord::new(i % nx, (i / nx) % ny, i / (nx * ny))
    };

    let mut layer = vec![seed_i];
    flags[seed_i] |= SEEN;
    let mut filled = 0usize;
    let mut depth = 0usize;
    let mut bbox = BoundingBox::point(seed);
    loop {
        let take = layer.len().min(cap - filled);
        for &i in &layer[..take] {
            labels[i] = target;
            bbox.extend(coord_of(i));
        }
        filled += take;
        on_layer(depth, &layer[..take]);
        if take < layer.len() {
            return Ok(FillReport {
                voxels_filled: filled,
                front_layers: depth + 1,
                stop_reason: StopReason::CapReached,
                filled_bounding_box: Some(bbox),
            });
        }

        let mut next = Vec::new();
        for &i in &layer {
            for &d in &conn {
                if let Some(j) = offset(i, d) {
                    if flags[j] & SEEN == 0 && admissible(labels, &flags, j) {
                        flags[j] |= SEEN;
                        next.push(j);
                    }
                }
            }
        }
        let stop_reason = if next.is_empty() {
            Some(StopReason::Exhausted)
        } else if filled == cap {
            Some(StopReason::CapReached)
        } else {
            None
        };
        if let Some(stop_reason) = stop_reason {
            return Ok(FillReport {
                voxels_filled: filled,
                front_layers: depth + 1,
                stop_reason,
                filled_bounding_box: Some(bbox),
            });
        }
        next.sort_unstable();
        layer = next;
        depth += 1;
    }
}

pub fn limited_flood_fill(
    volume: &mut Volume,
    config: &FillConfig,
    plugs: &[PlugBox],
) -> Result<FillReport> {
    limited_flood_fill_observed(volume, config, plugs, |_, _| {})
}

/// Parenchyma first (sealing wall holes from outside), then lumen from the
/// trachea seed with parenchyma acting as wall.
pub fn segment_airways(
    volume: &mut Volume,
    parenchyma_cfg: &FillConfig,
    lumen_cfg: &FillConfig,
    plugs: &[PlugBox],
) -> Result<(FillReport, FillReport)> {
    let mut parenchyma_cfg = parenchyma_cfg.clone();
    parenchyma_cfg.target_label = Label::Parenchyma;
    let mut lumen_cfg = lumen_cfg.clone();
    lumen_cfg.target_label = Label::Lumen;
    // range-check plugs before anything is labeled
    for p in plugs {
        p.check(volume)?;
    }
    let first = limited_flood_fill(volume, &parenchyma_cfg, plugs)?;
    let second = limited_flood_fill(volume, &lumen_cfg, &[])?;
    Ok((first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const AIR: Hu = -1000;
    const SOLID: Hu = 40;

    /// Solid block with a 5x5x5 air cavity at [2, 7) on every axis.
    fn cavity_volume() -> Volume {
        let mut v = Volume::filled([9, 9, 9], [1.0; 3], SOLID).unwrap();
        for z in 2..7 {
            for y in 2..7 {
                for x in 2..7 {
                    let i = v.index(x, y, z);
                    v.intensities_mut()[i] = AIR;
                }
            }
        }
        v
    }

    /// Cavity inside a 1-voxel wall, exterior air outside, one pinhole
    /// through the wall at (4, 4, 1).
    fn pinhole_volume() -> (Volume, Vec<bool>) {
        let mut v = Volume::filled([11, 11, 11], [1.0; 3], AIR).unwrap();
        for z in 1..10 {
            for y in 1..10 {
                for x in 1..10 {
                    let shell = [x, y, z].iter().any(|&c| c == 1 || c == 9);
                    if shell {
                        let i = v.index(x, y, z);
                        v.intensities_mut()[i] = SOLID;
                    }
                }
            }
        }
        let exterior: Vec<bool> = (0..v.len())
            .map(|i| {
                let c = v.coord(i);
                [c.x, c.y, c.z].iter().any(|&k| k == 0 || k == 10)
            })
            .collect();
        let hole = v.index(5, 5, 1);
        v.intensities_mut()[hole] = AIR;
        (v, exterior)
    }

    fn centre() -> VoxelCoord {
        VoxelCoord::new(4, 4, 4)
    }

    #[test]
    fn sealed_cavity_fills_exactly() {
        let mut v = cavity_volume();
        let r = limited_flood_fill(&mut v, &FillConfig::new(centre(), Label::Lumen), &[]).unwrap();
        assert_eq!(r.voxels_filled, 125);
        assert_eq!(r.stop_reason, StopReason::Exhausted);
        assert_eq!(v.count_label(Label::Lumen), 125);
        let bb = r.filled_bounding_box.unwrap();
        assert_eq!((bb.lo, bb.hi), (VoxelCoord::new(2, 2, 2), VoxelCoord::new(6, 6, 6)));
        // 6-connected front from the centre of a 5-cube reaches L1 distance 6
        assert_eq!(r.front_layers, 7);
    }

    #[test]
    fn cap_binds() {
        let mut v = cavity_volume();
        let cfg = FillConfig::new(centre(), Label::Lumen).with_cap(50);
        let r = limited_flood_fill(&mut v, &cfg, &[]).unwrap();
        assert_eq!(r.voxels_filled, 50);
        assert_eq!(r.stop_reason, StopReason::CapReached);
        assert_eq!(v.count_label(Label::Lumen), 50);
    }

    #[test]
    fn cap_equal_to_cavity_is_exhausted() {
        let mut v = cavity_volume();
        let cfg = FillConfig::new(centre(), Label::Lumen).with_cap(125);
        let r = limited_flood_fill(&mut v, &cfg, &[]).unwrap();
        assert_eq!(r.stop_reason, StopReason::Exhausted);
    }

    #[test]
    fn invalid_seeds() {
        let mut v = cavity_volume();
        for seed in [VoxelCoord::new(0, 0, 0), VoxelCoord::new(20, 0, 0)] {
            let r = limited_flood_fill(&mut v, &FillConfig::new(seed, Label::Lumen), &[]).unwrap();
            assert_eq!(r.stop_reason, StopReason::SeedInvalid);
            assert_eq!(r.voxels_filled, 0);
        }
        let plug = PlugBox::voxel(centre());
        let r = limited_flood_fill(&mut v, &FillConfig::new(centre(), Label::Lumen), &[plug]).unwrap();
        assert_eq!(r.stop_reason, StopReason::SeedInvalid);
        assert_eq!(v.count_label(Label::Lumen), 0);
    }

    #[test]
    fn pinhole_leaks_without_gate_and_not_with_gate() {
        let (base, exterior) = pinhole_volume();
        let seed = VoxelCoord::new(5, 5, 5);

        let mut v = base.clone();
        limited_flood_fill(&mut v, &FillConfig::new(seed, Label::Lumen), &[]).unwrap();
        let leaked = (0..v.len())
            .filter(|&i| exterior[i] && v.labels()[i] == Label::Lumen)
            .count();
        assert_eq!(leaked, exterior.iter().filter(|&&e| e).count());

        for s in [1, 2] {
            let mut v = base.clone();
            let cfg = FillConfig::new(seed, Label::Lumen).with_hole_size(s);
            limited_flood_fill(&mut v, &cfg, &[]).unwrap();
            let leaked = (0..v.len())
                .filter(|&i| exterior[i] && v.labels()[i] == Label::Lumen)
                .count();
            assert_eq!(leaked, 0, "s = {s}");
            assert!(v.count_label(Label::Lumen) > 0);
        }
    }

    #[test]
    fn plug_seals_pinhole() {
        let (mut v, exterior) = pinhole_volume();
        let plug = PlugBox::voxel(VoxelCoord::new(5, 5, 1));
        limited_flood_fill(&mut v, &FillConfig::new(VoxelCoord::new(5, 5, 5), Label::Lumen), &[plug])
            .unwrap();
        assert_eq!(v.count_label(Label::Lumen), 7 * 7 * 7);
        assert!((0..v.len()).all(|i| !(exterior[i] && v.labels()[i] == Label::Lumen)));
    }

    #[test]
    fn plug_counts() {
        let mut v = Volume::filled([6, 6, 6], [1.0; 3], AIR).unwrap();
        let b = PlugBox::new(VoxelCoord::new(0, 0, 0), VoxelCoord::new(1, 1, 1)).unwrap();
        assert_eq!(apply_plugs(&mut v, &[b]).unwrap(), 8);

        let mut v = Volume::filled([6, 6, 6], [1.0; 3], AIR).unwrap();
        let a = PlugBox::voxel(VoxelCoord::new(0, 0, 0));
        let b = PlugBox::voxel(VoxelCoord::new(3, 3, 3));
        assert_eq!(apply_plugs(&mut v, &[a, b]).unwrap(), 2);

        // 2x2x2 and 1x1x3 boxes sharing one voxel: 8 + 3 - 1
        let mut v = Volume::filled([6, 6, 6], [1.0; 3], AIR).unwrap();
        let a = PlugBox::new(VoxelCoord::new(0, 0, 0), VoxelCoord::new(1, 1, 1)).unwrap();
        let b = PlugBox::new(VoxelCoord::new(1, 1, 1), VoxelCoord::new(1, 1, 3)).unwrap();
        assert_eq!(apply_plugs(&mut v, &[a, b]).unwrap(), 10);
        assert_eq!(v.count_label(Label::Plug), 10);
    }

    #[test]
    fn plug_out_of_range_is_rejected_before_marking() {
        let mut v = Volume::filled([4, 4, 4], [1.0; 3], AIR).unwrap();
        let ok = PlugBox::voxel(VoxelCoord::new(0, 0, 0));
        let bad = PlugBox::voxel(VoxelCoord::new(4, 0, 0));
        assert!(apply_plugs(&mut v, &[ok, bad]).is_err());
        assert_eq!(v.count_label(Label::Plug), 0);
    }

    #[test]
    fn plug_parsing() {
        let p: PlugBox = "1:2, 3:4,5:5".parse().unwrap();
        assert_eq!(p.lo, VoxelCoord::new(1, 3, 5));
        assert_eq!(p.hi, VoxelCoord::new(2, 4, 5));
        assert!("1:2,3:4".parse::<PlugBox>().is_err());
        assert!("2:1,0:0,0:0".parse::<PlugBox>().is_err());
    }

    #[test]
    fn config_bounds() {
        let c = FillConfig::new(centre(), Label::Lumen);
        assert!(c.clone().with_cap(0).validate().is_err());
        assert!(c.clone().with_hole_size(11).validate().is_err());
        let mut w = c.clone();
        w.target_label = Label::Wall;
        assert!(w.validate().is_err());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn two_phase_keeps_sealed_lumen_for_phase_two() {
        let (mut v, _) = pinhole_volume();
        // seal the hole again: pure sealed geometry
        let hole = v.index(5, 5, 1);
        v.intensities_mut()[hole] = SOLID;
        let par = FillConfig::new(VoxelCoord::new(0, 0, 0), Label::Parenchyma);
        let lum = FillConfig::new(VoxelCoord::new(5, 5, 5), Label::Lumen);

        let mut after_one = v.clone();
        limited_flood_fill(&mut after_one, &par, &[]).unwrap();
        assert_eq!(after_one.label(VoxelCoord::new(5, 5, 5)), Label::Unlabeled);

        let (r1, r2) = segment_airways(&mut v, &par, &lum, &[]).unwrap();
        assert_eq!(r1.voxels_filled, 11usize.pow(3) - 9usize.pow(3));
        assert_eq!(r2.voxels_filled, 7usize.pow(3));
    }

    #[test]
    fn two_phase_with_pinhole_and_gate() {
        let (mut v, exterior) = pinhole_volume();
        let par = FillConfig::new(VoxelCoord::new(0, 0, 0), Label::Parenchyma).with_hole_size(2);
        let lum = FillConfig::new(VoxelCoord::new(5, 5, 5), Label::Lumen).with_hole_size(2);
        let (_, r2) = segment_airways(&mut v, &par, &lum, &[]).unwrap();
        assert_eq!(r2.stop_reason, StopReason::Exhausted);
        assert!((0..v.len()).all(|i| !(exterior[i] && v.labels()[i] == Label::Lumen)));
    }

    // --- brute-force oracles -------------------------------------------

    fn neighbours(dims: [usize; 3], i: usize, conn: Connectivity) -> Vec<usize> {
        let [nx, ny, nz] = dims;
        let (x, y, z) = ((i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64);
        let mut out = vec![];
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let m = dx.abs() + dy.abs() + dz.abs();
                    if m == 0 || (conn == Connectivity::Six && m != 1) {
                        continue;
                    }
                    let (a, b, c) = (x + dx, y + dy, z + dz);
                    if a >= 0 && b >= 0 && c >= 0 && a < nx as i64 && b < ny as i64 && c < nz as i64 {
                        out.push(a as usize + nx * (b as usize + ny * c as usize));
                    }
                }
            }
        }
        out
    }

    /// BFS distances over `allowed` from `seed`; `usize::MAX` if unreachable.
    fn bfs(dims: [usize; 3], allowed: &[bool], seed: usize, conn: Connectivity) -> Vec<usize> {
        let mut dist = vec![usize::MAX; allowed.len()];
        dist[seed] = 0;
        let mut q = std::collections::VecDeque::from([seed]);
        while let Some(i) = q.pop_front() {
            for j in neighbours(dims, i, conn) {
                if allowed[j] && dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    q.push_back(j);
                }
            }
        }
        dist
    }

    /// Direct transcription of the gate definition, no laziness or shortcuts.
    fn gate_oracle(v: &Volume, seed: usize, s: u32, conn: Connectivity, thr: Hu) -> Vec<bool> {
        let dims = v.dims();
        let n = v.len();
        let air: Vec<bool> = (0..n)
            .map(|i| v.intensities()[i] < thr && v.labels()[i] == Label::Unlabeled)
            .collect();
        let r = s as i64;
        let core: Vec<bool> = (0..n)
            .map(|i| {
                if !air[i] {
                    return false;
                }
                let c = v.coord(i);
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            if dx * dx + dy * dy + dz * dz > r * r {
                                continue;
                            }
                            let (a, b, cc) = (c.x as i64 + dx, c.y as i64 + dy, c.z as i64 + dz);
                            if a < 0 || b < 0 || cc < 0 {
                                return false;
                            }
                            let p = VoxelCoord::new(a as usize, b as usize, cc as usize);
                            if !v.contains(p) || !air[v.index(p.x, p.y, p.z)] {
                                return false;
                            }
                        }
                    }
                }
                true
            })
            .collect();
        let mut core_or_seed = core.clone();
        core_or_seed[seed] = true;
        let comp_dist = bfs(dims, &core_or_seed, seed, conn);
        let comp: Vec<bool> = comp_dist.iter().map(|&d| d != usize::MAX).collect();
        // multi-source face-step distance from core component voxels
        let mut dist = vec![usize::MAX; n];
        let mut q = std::collections::VecDeque::new();
        for i in 0..n {
            if comp[i] && core[i] {
                dist[i] = 0;
                q.push_back(i);
            }
        }
        while let Some(i) = q.pop_front() {
            for j in neighbours(dims, i, Connectivity::Six) {
                if air[j] && dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    q.push_back(j);
                }
            }
        }
        (0..n).map(|i| comp[i] || dist[i] <= s as usize).collect()
    }

    fn random_volume(dims: [usize; 3], seed: u64, air_frac: f64) -> Volume {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = dims.iter().product();
        let data = (0..n)
            .map(|_| if rng.random::<f64>() < air_frac { AIR } else { SOLID })
            .collect();
        Volume::new(dims, [1.0; 3], data).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn front_distance_is_bfs_distance(seed in any::<u64>(), conn26 in any::<bool>(), cap in 1usize..400) {
            let conn = if conn26 { Connectivity::TwentySix } else { Connectivity::Six };
            let mut v = random_volume([8, 7, 6], seed, 0.7);
            let s = VoxelCoord::new(4, 3, 3);
            let si = v.index(s.x, s.y, s.z);
            v.intensities_mut()[si] = AIR;
            let allowed = v.air_mask(DEFAULT_AIR_THRESHOLD);
            let dist = bfs(v.dims(), &allowed, si, conn);
            let mut recorded = vec![usize::MAX; v.len()];
            let cfg = FillConfig::new(s, Label::Lumen).with_connectivity(conn).with_cap(cap);
            let r = limited_flood_fill_observed(&mut v, &cfg, &[], |d, layer| {
                for &i in layer { recorded[i] = d; }
            }).unwrap();
            prop_assert!(r.voxels_filled <= cap);
            if r.stop_reason == StopReason::CapReached {
                prop_assert_eq!(r.voxels_filled, cap);
            }
            let mut max_labeled = 0;
            for i in 0..v.len() {
                if v.labels()[i] == Label::Lumen {
                    prop_assert_eq!(recorded[i], dist[i]);
                    max_labeled = max_labeled.max(dist[i]);
                }
            }
            // uniform front: nothing beyond the deepest labeled layer, and the
            // layer before it is complete
            for i in 0..v.len() {
                if dist[i] != usize::MAX && dist[i] < max_labeled {
                    prop_assert_eq!(v.labels()[i], Label::Lumen);
                }
            }
        }

        #[test]
        fn gate_matches_oracle(seed in any::<u64>(), s in 1u32..3, conn26 in any::<bool>()) {
            let conn = if conn26 { Connectivity::TwentySix } else { Connectivity::Six };
            let mut v = random_volume([9, 8, 7], seed, 0.85);
            let sc = VoxelCoord::new(4, 4, 3);
            let si = v.index(sc.x, sc.y, sc.z);
            v.intensities_mut()[si] = AIR;
            let region = gate_oracle(&v, si, s, conn, DEFAULT_AIR_THRESHOLD);
            let expected = bfs(v.dims(), &region, si, conn);
            let cfg = FillConfig::new(sc, Label::Lumen).with_hole_size(s).with_connectivity(conn);
            limited_flood_fill(&mut v, &cfg, &[]).unwrap();
            for i in 0..v.len() {
                prop_assert_eq!(v.labels()[i] == Label::Lumen, expected[i] != usize::MAX, "voxel {}", i);
            }
        }

        #[test]
        fn gate_is_monotone_in_hole_size(seed in any::<u64>(), s in 0u32..3, conn26 in any::<bool>()) {
            let conn = if conn26 { Connectivity::TwentySix } else { Connectivity::Six };
            let mut base = random_volume([10, 9, 8], seed, 0.9);
            let sc = VoxelCoord::new(5, 4, 4);
            let si = base.index(sc.x, sc.y, sc.z);
            base.intensities_mut()[si] = AIR;
            let run = |s: u32| {
                let mut v = base.clone();
                let cfg = FillConfig::new(sc, Label::Lumen).with_hole_size(s).with_connectivity(conn);
                limited_flood_fill(&mut v, &cfg, &[]).unwrap();
                v.labels().iter().map(|&l| l == Label::Lumen).collect::<Vec<_>>()
            };
            let small = run(s);
            let large = run(s + 1);
            for i in 0..small.len() {
                prop_assert!(!large[i] || small[i], "voxel {} filled at s+1 but not at s", i);
            }
        }

        #[test]
        fn never_crosses_walls_or_plugs(seed in any::<u64>(), s in 0u32..3) {
            let mut v = random_volume([8, 8, 8], seed, 0.8);
            let sc = VoxelCoord::new(4, 4, 4);
            let si = v.index(sc.x, sc.y, sc.z);
            v.intensities_mut()[si] = AIR;
            let plug = PlugBox::new(VoxelCoord::new(0, 0, 2), VoxelCoord::new(7, 7, 2)).unwrap();
            let before = v.clone();
            let cfg = FillConfig::new(sc, Label::Lumen).with_hole_size(s);
            limited_flood_fill(&mut v, &cfg, &[plug]).unwrap();
            for i in 0..v.len() {
                if v.labels()[i] == Label::Lumen {
                    prop_assert!(before.intensities()[i] < DEFAULT_AIR_THRESHOLD);
                    prop_assert!(!plug.contains(v.coord(i)));
                    prop_assert!(v.coord(i).z > 2);
                }
            }
        }

        #[test]
        fn deterministic(seed in any::<u64>(), s in 0u32..3) {
            let base = random_volume([8, 8, 8], seed, 0.75);
            let cfg = FillConfig::new(VoxelCoord::new(3, 3, 3), Label::Lumen).with_hole_size(s).with_cap(100);
            let mut a = base.clone();
            let mut b = base.clone();
            let ra = limited_flood_fill(&mut a, &cfg, &[]).unwrap();
            let rb = limited_flood_fill(&mut b, &cfg, &[]).unwrap();
            prop_assert_eq!(ra, rb);
            prop_assert!(a.labels() == b.labels());
        }
    }
}
