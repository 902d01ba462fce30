//! Surface-distance objective: from each visible model surface sample a ray
//! runs along the surface normal, both inward and outward, to the nearest
//! crossing of the lumen boundary. The boundary is the 0.5 level of the
//! trilinearly interpolated lumen indicator.

use serde::{Deserialize, Serialize};

use super::model::{is_visible, surface_samples, BifurcationParams, Piece, Vec3};
use crate::error::{Error, Result};
use crate::volume::{Label, Volume};

pub const MIN_SAMPLES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub samples: usize,
    /// Distance charged to rays that find no boundary or leave the volume;
    /// also capped at the parent diameter.
    pub max_ray_mm: f64,
    /// Ray step as a fraction of the smallest voxel spacing.
    pub step_fraction: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            samples: 512,
            max_ray_mm: 8.0,
            step_fraction: 0.25,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::Config(format!("need at least {MIN_SAMPLES} surface samples")));
        }
        if !(self.max_ray_mm > 0.0) || !(self.step_fraction > 0.0) {
            return Err(Error::Config("max_ray_mm and step_fraction must be positive".into()));
        }
        Ok(())
    }
}

/// Binary lumen indicator with trilinear lookup in millimetres.
#[derive(Clone, Debug)]
pub struct LumenField {
    dims: [usize; 3],
    spacing: [f64; 3],
    inv: [f64; 3],
    mask: Vec<u8>,
}

impl LumenField {
    pub fn from_volume(volume: &Volume) -> Result<Self> {
        let mask: Vec<u8> = volume.labels().iter().map(|&l| (l == Label::Lumen) as u8).collect();
        Self::from_mask(volume.dims(), volume.spacing(), mask)
    }

    pub fn from_mask(dims: [usize; 3], spacing: [f64; 3], mask: Vec<u8>) -> Result<Self> {
        if !mask.iter().any(|&m| m != 0) {
            return Err(Error::NoLumen);
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Config("lumen field needs at least 2 voxels per axis".into()));
        }
        Ok(Self {
            dims,
            spacing,
            inv: spacing.map(|s| 1.0 / s),
            mask,
        })
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Interpolated indicator, or `None` outside the grid.
    #[inline]
    pub fn value(&self, p: &Vec3) -> Option<f64> {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let f = p[a] * self.inv[a];
            let top = (self.dims[a] - 1) as f64;
            if !(f >= 0.0 && f <= top) {
                return None;
            }
            let i = (f.floor() as usize).min(self.dims[a] - 2);
            base[a] = i;
            frac[a] = f - i as f64;
        }
        let [nx, ny, _] = self.dims;
        let i000 = base[0] + nx * (base[1] + ny * base[2]);
        let m = |o: usize| self.mask[i000 + o] as f64;
        let (sy, sz) = (nx, nx * ny);
        let [fx, fy, fz] = frac;
        let c00 = m(0) * (1.0 - fx) + m(1) * fx;
        let c10 = m(sy) * (1.0 - fx) + m(sy + 1) * fx;
        let c01 = m(sz) * (1.0 - fx) + m(sz + 1) * fx;
        let c11 = m(sz + sy) * (1.0 - fx) + m(sz + sy + 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        Some(c0 * (1.0 - fz) + c1 * fz)
    }

    pub fn is_lumen(&self, p: &Vec3) -> bool {
        self.value(p).is_some_and(|v| v >= 0.5)
    }

    /// Distance from `p` to the nearest boundary crossing along `±n`.
    pub fn boundary_distance(&self, p: &Vec3, n: &Vec3, step: f64, max: f64) -> f64 {
        let Some(v0) = self.value(p) else {
            return max;
        };
        let inside = v0 >= 0.5;
        let mut prev = [v0, v0];
        let mut alive = [true, true];
        let steps = (max / step).ceil() as usize;
        for k in 1..=steps {
            let t = k as f64 * step;
            let mut hit = f64::INFINITY;
            for (d, sign) in [1.0, -1.0].into_iter().enumerate() {
                if !alive[d] {
                    continue;
                }
                match self.value(&(p + n * (sign * t))) {
                    None => alive[d] = false,
                    Some(v) => {
                        if (v >= 0.5) != inside {
                            let t0 = t - step;
                            let frac = (0.5 - prev[d]) / (v - prev[d]);
                            hit = hit.min(t0 + step * frac.clamp(0.0, 1.0));
                        }
                        prev[d] = v;
                    }
                }
            }
            if hit.is_finite() {
                return hit.min(max);
            }
            if !alive[0] && !alive[1] {
                return max;
            }
        }
        max
    }
}

/// Fraction of a piece's samples that must stay visible; hidden samples
/// below this quota are charged the penalty distance.
pub const VISIBLE_QUOTA: f64 = 0.25;

/// Mean squared boundary distance (mm²), averaged per piece (parent and each
/// daughter) so that no piece can vanish from the fit by hiding its surface.
pub fn surface_objective(params: &BifurcationParams, field: &LumenField, cfg: &ObjectiveConfig) -> f64 {
    let g = params.geometry();
    let all = surface_samples(&g, cfg.samples);
    let step = cfg.step_fraction * field.min_spacing();
    // Beyond a parent diameter a ray is more likely to meet a neighbouring
    // airway than this one's wall.
    let max_ray = cfg.max_ray_mm.min(params.parent_diameter_mm);
    let penalty = max_ray * max_ray;
    let mut generated = [0usize; 3];
    let mut visible = [0usize; 3];
    let mut sum = [0.0f64; 3];
    for s in &all {
        let k = match s.piece {
            Piece::Parent => 0,
            Piece::Daughter(i) => i + 1,
        };
        generated[k] += 1;
        if !is_visible(params, &g, s) {
            continue;
        }
        visible[k] += 1;
        let d = field.boundary_distance(&s.point, &s.normal, step, max_ray);
        sum[k] += d * d;
    }
    (0..3)
        .map(|k| {
            let quota = VISIBLE_QUOTA * generated[k] as f64;
            let v = visible[k] as f64;
            if v >= quota && v > 0.0 {
                sum[k] / v
            } else {
                (sum[k] + (quota - v) * penalty) / quota.max(1.0)
            }
        })
        .sum::<f64>()
        / 3.0
}

/// [`surface_objective`] on a labeled volume.
pub fn evaluate(params: &BifurcationParams, volume: &Volume, cfg: &ObjectiveConfig) -> Result<f64> {
    cfg.validate()?;
    let field = LumenField::from_volume(volume)?;
    Ok(surface_objective(params, &field, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifurcation::code::BranchCode;
    use crate::phantom::{generate_phantom, PhantomSpec, VoxelClass};

    fn labeled(spec: &PhantomSpec) -> (Volume, crate::phantom::GroundTruth) {
        let (mut v, truth) = generate_phantom(spec).unwrap();
        for (l, c) in v.labels_mut().iter_mut().zip(&truth.classes) {
            if *c == VoxelClass::Lumen {
                *l = Label::Lumen;
            }
        }
        (v, truth)
    }

    #[test]
    fn trilinear_matches_corners_and_midpoints() {
        let mut mask = vec![0u8; 8];
        mask[1] = 1; // (1,0,0)
        let f = LumenField::from_mask([2, 2, 2], [1.0, 2.0, 3.0], mask).unwrap();
        assert_eq!(f.value(&Vec3::new(1.0, 0.0, 0.0)), Some(1.0));
        assert_eq!(f.value(&Vec3::new(0.5, 0.0, 0.0)), Some(0.5));
        assert_eq!(f.value(&Vec3::new(0.5, 1.0, 0.0)), Some(0.25));
        assert_eq!(f.value(&Vec3::new(1.5, 0.0, 0.0)), None);
    }

    #[test]
    fn ray_finds_a_flat_boundary() {
        // Lumen for x <= 4 on a 10-voxel line (padded to 2 in y, z).
        let dims = [10, 2, 2];
        let mask = (0..40).map(|i| ((i % 10) <= 4) as u8).collect();
        let f = LumenField::from_mask(dims, [1.0; 3], mask).unwrap();
        let d = f.boundary_distance(&Vec3::new(2.0, 0.5, 0.5), &Vec3::x(), 0.25, 8.0);
        assert!((d - 2.5).abs() < 1e-9, "{d}");
        let d = f.boundary_distance(&Vec3::new(7.0, 0.5, 0.5), &Vec3::x(), 0.25, 8.0);
        assert!((d - 2.5).abs() < 1e-9, "{d}");
        // Outward only hits the grid edge: charged the penalty.
        let d = f.boundary_distance(&Vec3::new(7.0, 0.5, 0.5), &Vec3::y(), 0.25, 8.0);
        assert_eq!(d, 8.0);
    }

    #[test]
    fn empty_labels_are_an_error() {
        let v = Volume::filled([4, 4, 4], [1.0; 3], 0).unwrap();
        let p = crate::phantom::generate_phantom(&PhantomSpec::single_bifurcation(35.0, 55.0, [1.0; 3]))
            .unwrap()
            .1
            .trachea_init;
        assert!(matches!(evaluate(&p, &v, &ObjectiveConfig::default()), Err(Error::NoLumen)));
    }

    #[test]
    fn truth_sits_at_quantization_floor_and_offsets_cost_more() {
        let spacing = [0.5, 0.5, 1.0];
        let (v, truth) = labeled(&PhantomSpec::single_bifurcation(35.0, 55.0, spacing));
        let cfg = ObjectiveConfig::default();
        let p = truth.tree[&BranchCode::root()];
        let aligned = evaluate(&p, &v, &cfg).unwrap();
        let floor = spacing.iter().map(|s| s * s).sum::<f64>();
        assert!(aligned <= floor, "aligned {aligned} above floor {floor}");
        let mut moved = p;
        moved.x_mm += 5.0;
        let off = evaluate(&moved, &v, &cfg).unwrap();
        assert!(off > aligned, "{off} <= {aligned}");
    }
}
