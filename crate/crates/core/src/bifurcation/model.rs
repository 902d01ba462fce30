//! The 15-parameter bifurcation: a parent cylinder ending at the branch
//! point, and two daughters that each leave along a toroidal arc (radius of
//! curvature `Rc`, subtended angle `θ`, daughter radius throughout) followed
//! by a short straight stub.
//!
//! Orientation is a ZYZ rotation: yaw and pitch point the parent axis `ez`,
//! roll turns the branching plane about it. Daughter 1 bends toward `+ex`,
//! daughter 2 toward `-ex`.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Stub length after the arc, in daughter diameters.
pub const STUB_DIAMETERS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationParams {
    pub parent_length_mm: f64,
    pub parent_diameter_mm: f64,
    pub angle1_deg: f64,
    pub curvature_radius1_mm: f64,
    pub diameter1_mm: f64,
    pub angle2_deg: f64,
    pub curvature_radius2_mm: f64,
    pub diameter2_mm: f64,
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    /// Held fixed during fitting.
    pub carina_radius_mm: f64,
}

impl BifurcationParams {
    pub const FIELD_COUNT: usize = 15;

    pub fn branch_point(&self) -> Vec3 {
        Vec3::new(self.x_mm, self.y_mm, self.z_mm)
    }

    pub fn set_branch_point(&mut self, p: Vec3) {
        self.x_mm = p.x;
        self.y_mm = p.y;
        self.z_mm = p.z;
    }

    /// Columns are `ex`, `ey`, `ez`.
    pub fn frame(&self) -> Rotation3<f64> {
        let z = Vector3::z_axis();
        let y = Vector3::y_axis();
        Rotation3::from_axis_angle(&z, self.yaw_deg.to_radians())
            * Rotation3::from_axis_angle(&y, self.pitch_deg.to_radians())
            * Rotation3::from_axis_angle(&z, self.roll_deg.to_radians())
    }

    pub fn set_frame(&mut self, r: &Rotation3<f64>) {
        let (yaw, pitch, roll) = zyz_angles(r.matrix());
        self.yaw_deg = yaw.to_degrees();
        self.pitch_deg = pitch.to_degrees();
        self.roll_deg = roll.to_degrees();
    }

    /// Frame whose `ez` is `axis` and whose `ex` is `reference` made
    /// perpendicular to it.
    pub fn frame_from_axes(axis: Vec3, reference: Vec3) -> Rotation3<f64> {
        let ez = axis.normalize();
        let mut ex = reference - ez * reference.dot(&ez);
        if ex.norm() < 1e-9 {
            ex = any_perpendicular(&ez);
        }
        let ex = ex.normalize();
        let ey = ez.cross(&ex);
        Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[ex, ey, ez]))
    }

    pub fn parent_axis(&self) -> Vec3 {
        self.frame() * Vec3::z()
    }

    pub fn diameters(&self) -> [f64; 2] {
        [self.diameter1_mm, self.diameter2_mm]
    }

    pub fn angles_deg(&self) -> [f64; 2] {
        [self.angle1_deg, self.angle2_deg]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.parent_length_mm,
            self.parent_diameter_mm,
            self.angle1_deg,
            self.curvature_radius1_mm,
            self.diameter1_mm,
            self.angle2_deg,
            self.curvature_radius2_mm,
            self.diameter2_mm,
            self.x_mm,
            self.y_mm,
            self.z_mm,
            self.yaw_deg,
            self.pitch_deg,
            self.roll_deg,
            self.carina_radius_mm,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("bifurcation parameters must be finite".into()));
        }
        let positive = [
            ("parent_length_mm", self.parent_length_mm),
            ("parent_diameter_mm", self.parent_diameter_mm),
            ("diameter1_mm", self.diameter1_mm),
            ("diameter2_mm", self.diameter2_mm),
            ("curvature_radius1_mm", self.curvature_radius1_mm),
            ("curvature_radius2_mm", self.curvature_radius2_mm),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.carina_radius_mm < 0.0 {
            return Err(Error::Config("carina_radius_mm must be non-negative".into()));
        }
        Ok(())
    }

    /// Exchange the daughters; the roll turns by 180° so each daughter keeps
    /// its position in space.
    pub fn swapped(&self) -> Self {
        let mut p = *self;
        std::mem::swap(&mut p.angle1_deg, &mut p.angle2_deg);
        std::mem::swap(&mut p.curvature_radius1_mm, &mut p.curvature_radius2_mm);
        std::mem::swap(&mut p.diameter1_mm, &mut p.diameter2_mm);
        p.roll_deg = wrap_deg(p.roll_deg + 180.0);
        p
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self)
    }

    /// Angle between the parent axis and daughter `i`'s exit tangent.
    pub fn reported_angle_deg(&self, daughter: usize) -> f64 {
        let g = self.geometry();
        let d = &g.daughters[daughter];
        g.ez.dot(&d.exit_dir).clamp(-1.0, 1.0).acos().to_degrees()
    }
}

pub fn wrap_deg(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

fn zyz_angles(m: &Matrix3<f64>) -> (f64, f64, f64) {
    let pitch = m[(2, 2)].clamp(-1.0, 1.0).acos();
    if pitch.sin().abs() > 1e-12 {
        let yaw = m[(1, 2)].atan2(m[(0, 2)]);
        let roll = m[(2, 1)].atan2(-m[(2, 0)]);
        (yaw, pitch, roll)
    } else {
        // Gimbal lock: fold everything into roll.
        let roll = m[(1, 0)].atan2(m[(0, 0)]);
        let roll = if m[(2, 2)] > 0.0 { roll } else { -roll };
        (0.0, pitch, roll)
    }
}

pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let trial = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (trial - v * trial.dot(v)).normalize()
}

pub fn rotate_about(v: &Vec3, axis: &Vec3, angle_rad: f64) -> Vec3 {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle_rad) * v
}

#[derive(Clone, Debug)]
pub struct DaughterGeom {
    /// +1 bends toward `ex`, -1 away.
    pub sign: f64,
    pub theta: f64,
    pub rc: f64,
    pub center: Vec3,
    pub r1: f64,
    pub exit_point: Vec3,
    pub exit_dir: Vec3,
    pub stub_len: f64,
    pub stub_end: Vec3,
}

/// Parameters resolved into world-space pieces.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub origin: Vec3,
    pub ex: Vec3,
    pub ey: Vec3,
    pub ez: Vec3,
    pub parent_start: Vec3,
    pub parent_radius: f64,
    pub daughters: [DaughterGeom; 2],
}

impl Geometry {
    pub fn new(p: &BifurcationParams) -> Self {
        let r = p.frame();
        let ex = r * Vec3::x();
        let ey = r * Vec3::y();
        let ez = r * Vec3::z();
        let origin = p.branch_point();
        let rp = p.parent_diameter_mm / 2.0;
        let make = |sign: f64, angle_deg: f64, rc: f64, d: f64| {
            let theta = angle_deg.to_radians();
            let center = origin + ex * (sign * rc);
            let exit_point = origin + (ez * theta.sin() + ex * (sign * (1.0 - theta.cos()))) * rc;
            let exit_dir = ez * theta.cos() + ex * (sign * theta.sin());
            let stub_len = STUB_DIAMETERS * d;
            DaughterGeom {
                sign,
                theta,
                rc,
                center,
                r1: d / 2.0,
                exit_point,
                exit_dir,
                stub_len,
                stub_end: exit_point + exit_dir * stub_len,
            }
        };
        Self {
            origin,
            ex,
            ey,
            ez,
            parent_start: origin - ez * p.parent_length_mm,
            parent_radius: rp,
            daughters: [
                make(1.0, p.angle1_deg, p.curvature_radius1_mm, p.diameter1_mm),
                make(-1.0, p.angle2_deg, p.curvature_radius2_mm, p.diameter2_mm),
            ],
        }
    }

    /// Axis point and tangent of daughter `i` at arc angle `phi` ∈ [0, θ].
    pub fn arc_point(&self, i: usize, phi: f64) -> (Vec3, Vec3) {
        let d = &self.daughters[i];
        let pos = self.origin + (self.ez * phi.sin() + self.ex * (d.sign * (1.0 - phi.cos()))) * d.rc;
        let tan = self.ez * phi.cos() + self.ex * (d.sign * phi.sin());
        (pos, tan)
    }

    /// Signed distance to the parent cylinder, which is cut flat at the
    /// branch point so that the joint belongs to the daughters.
    pub fn parent_signed_distance(&self, p: &Vec3) -> f64 {
        let axis = self.origin - self.parent_start;
        let len = axis.norm();
        let q = p - self.parent_start;
        let t = q.dot(&axis) / len;
        let radial = (q - axis * (t / len)).norm() - self.parent_radius;
        let axial = (t - len / 2.0).abs() - len / 2.0;
        radial.max(axial).min(0.0) + Vec3::new(radial.max(0.0), axial.max(0.0), 0.0).norm()
    }

    pub fn daughter_signed_distance(&self, i: usize, p: &Vec3) -> f64 {
        let d = &self.daughters[i];
        let stub = segment_distance(p, &d.exit_point, &d.stub_end) - d.r1;
        let q = p - d.center;
        let qz = q.dot(&self.ez);
        let qx = q.dot(&self.ex);
        let phi = qz.atan2(-d.sign * qx);
        let arc_at = |phi: f64| {
            let (a, _) = self.arc_point(i, phi);
            (p - a).norm() - d.r1
        };
        let arc = if (0.0..=d.theta).contains(&phi) {
            arc_at(phi)
        } else {
            arc_at(0.0).min(arc_at(d.theta))
        };
        arc.min(stub)
    }
}

pub fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

/// Which piece of the model a surface sample lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Piece {
    Parent,
    Daughter(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub normal: Vec3,
    pub piece: Piece,
}

fn ring(
    out: &mut Vec<SurfaceSample>,
    axis_point: Vec3,
    tangent: Vec3,
    binormal: Vec3,
    radius: f64,
    around: usize,
    offset: f64,
    piece: Piece,
) {
    let n1 = binormal.cross(&tangent).normalize();
    let n2 = tangent.cross(&n1);
    for j in 0..around {
        let psi = std::f64::consts::TAU * (j as f64 + offset) / around as f64;
        let normal = n1 * psi.cos() + n2 * psi.sin();
        out.push(SurfaceSample {
            point: axis_point + normal * radius,
            normal,
            piece,
        });
    }
}

fn layout(n: usize) -> (usize, usize) {
    let rings = ((n as f64 / 16.0).round() as usize).max(1);
    let around = n.div_ceil(rings).max(3);
    (rings, around)
}

/// Stratified grid of samples over the whole model surface, before any
/// overlap culling. A quarter of the budget goes to the parent, the rest is
/// split between the daughters (one third arc, two thirds stub).
pub fn surface_samples(g: &Geometry, count: usize) -> Vec<SurfaceSample> {
    let parent_n = count / 4;
    let daughter_n = (count - parent_n) / 2;
    let arc_n = daughter_n / 3;
    let stub_n = daughter_n - arc_n;
    let mut out = Vec::with_capacity(count + 64);

    let (rings, around) = layout(parent_n);
    let axis = g.origin - g.parent_start;
    for k in 0..rings {
        let t = (k as f64 + 0.5) / rings as f64;
        let off = if k % 2 == 0 { 0.0 } else { 0.5 };
        ring(&mut out, g.parent_start + axis * t, g.ez, g.ey, g.parent_radius, around, off, Piece::Parent);
    }
    for i in 0..2 {
        let d = &g.daughters[i];
        let (rings, around) = layout(arc_n);
        for k in 0..rings {
            let phi = d.theta * (k as f64 + 0.5) / rings as f64;
            let (pos, tan) = g.arc_point(i, phi);
            let off = if k % 2 == 0 { 0.25 } else { 0.75 };
            ring(&mut out, pos, tan, g.ey, g.daughters[i].r1, around, off, Piece::Daughter(i));
        }
        let (rings, around) = layout(stub_n);
        for k in 0..rings {
            let t = (k as f64 + 0.5) / rings as f64;
            let off = if k % 2 == 0 { 0.0 } else { 0.5 };
            ring(
                &mut out,
                d.exit_point + d.exit_dir * (d.stub_len * t),
                d.exit_dir,
                g.ey,
                d.r1,
                around,
                off,
                Piece::Daughter(i),
            );
        }
    }
    out
}

/// Whether a sample lies on the visible model surface: parent samples
/// swallowed by a daughter, and daughter samples inside the parent or within
/// the carina radius of the other daughter, are hidden.
pub fn is_visible(p: &BifurcationParams, g: &Geometry, s: &SurfaceSample) -> bool {
    match s.piece {
        Piece::Parent => {
            g.daughter_signed_distance(0, &s.point) >= 0.0 && g.daughter_signed_distance(1, &s.point) >= 0.0
        }
        Piece::Daughter(i) => {
            g.parent_signed_distance(&s.point) >= -1e-9
                && g.daughter_signed_distance(1 - i, &s.point) >= p.carina_radius_mm
        }
    }
}

pub fn visible_samples(p: &BifurcationParams, count: usize) -> Vec<SurfaceSample> {
    let g = p.geometry();
    surface_samples(&g, count)
        .into_iter()
        .filter(|s| is_visible(p, &g, s))
        .collect()
}
