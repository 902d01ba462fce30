//! Scalar CT-like volumes with a parallel label grid.
//!
//! On disk a volume is a small JSON header plus a raw little-endian payload:
//!
//! ```json
//! {"dims":[4,4,4],"spacing_mm":[0.5,0.5,1.0],"dtype":"i16","order":"x-fastest","data_file":"vol.raw"}
//! ```
//!
//! Labels use the same header scheme with `dtype` `"u8"`. `data_file` is
//! resolved relative to the header's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hounsfield units.
pub type Hu = i16;

pub const DEFAULT_AIR_THRESHOLD: Hu = -500;

/// Display window used for slice export, in HU.
pub const WINDOW_MIN: f64 = -1000.0;
pub const WINDOW_MAX: f64 = 400.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    #[default]
    Unlabeled = 0,
    Lumen = 1,
    Parenchyma = 2,
    Plug = 3,
    Wall = 4,
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Label::Unlabeled,
            1 => Label::Lumen,
            2 => Label::Parenchyma,
            3 => Label::Plug,
            4 => Label::Wall,
            other => return Err(Error::InvalidLabel(other)),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> char {
        ['x', 'y', 'z'][self.index()]
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            _ => Err(Error::Config(format!("unknown axis {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelCoord {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl VoxelCoord {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
    pub data_file: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    intensities: Vec<Hu>,
    labels: Vec<Label>,
}

fn validate_geometry(dims: [usize; 3], spacing: [f64; 3]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::InvalidHeader(format!("dims must be positive, got {dims:?}")));
    }
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidHeader(format!(
            "spacing must be positive, got {spacing:?}"
        )));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidHeader("dims overflow".into()))
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], intensities: Vec<Hu>) -> Result<Self> {
        let n = validate_geometry(dims, spacing)?;
        if intensities.len() != n {
            return Err(Error::SizeMismatch {
                expected: n * 2,
                found: intensities.len() * 2,
            });
        }
        Ok(Self {
            dims,
            spacing,
            intensities,
            labels: vec![Label::Unlabeled; n],
        })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: Hu) -> Result<Self> {
        let n = validate_geometry(dims, spacing)?;
        Self::new(dims, spacing, vec![value; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    pub fn intensities(&self) -> &[Hu] {
        &self.intensities
    }

    pub fn intensities_mut(&mut self) -> &mut [Hu] {
        &mut self.intensities
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [Label] {
        &mut self.labels
    }

    /// Read-only intensities alongside mutable labels.
    pub fn split_mut(&mut self) -> (&[Hu], &mut [Label]) {
        (&self.intensities, &mut self.labels)
    }

    pub fn clear_labels(&mut self) {
        self.labels.fill(Label::Unlabeled);
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coord(&self, index: usize) -> VoxelCoord {
        let [nx, ny, _] = self.dims;
        VoxelCoord {
            x: index % nx,
            y: (index / nx) % ny,
            z: index / (nx * ny),
        }
    }

    pub fn contains(&self, c: VoxelCoord) -> bool {
        c.x < self.dims[0] && c.y < self.dims[1] && c.z < self.dims[2]
    }

    pub fn check_coord(&self, c: VoxelCoord) -> Result<usize> {
        for (axis, (&v, &n)) in ['x', 'y', 'z']
            .into_iter()
            .zip([c.x, c.y, c.z].iter().zip(self.dims.iter()))
        {
            if v >= n {
                return Err(Error::OutOfRange {
                    axis,
                    index: v,
                    extent: n,
                });
            }
        }
        Ok(self.index(c.x, c.y, c.z))
    }

    pub fn intensity(&self, c: VoxelCoord) -> Hu {
        self.intensities[self.index(c.x, c.y, c.z)]
    }

    pub fn label(&self, c: VoxelCoord) -> Label {
        self.labels[self.index(c.x, c.y, c.z)]
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Voxel centre in millimetres; voxel (0,0,0) sits at the origin.
    pub fn position_mm(&self, c: VoxelCoord) -> [f64; 3] {
        [
            c.x as f64 * self.spacing[0],
            c.y as f64 * self.spacing[1],
            c.z as f64 * self.spacing[2],
        ]
    }

    /// True exactly where intensity is strictly below `threshold`.
    pub fn air_mask(&self, threshold: Hu) -> Vec<bool> {
        self.intensities.iter().map(|&v| v < threshold).collect()
    }

    pub fn air_count(&self, threshold: Hu) -> usize {
        self.intensities.iter().filter(|&&v| v < threshold).count()
    }

    pub fn load(header_path: impl AsRef<Path>) -> Result<Self> {
        let header_path = header_path.as_ref();
        let (header, data) = read_payload(header_path, "i16")?;
        let n = validate_geometry(header.dims, header.spacing_mm)?;
        if data.len() != n * 2 {
            return Err(Error::SizeMismatch {
                expected: n * 2,
                found: data.len(),
            });
        }
        let intensities = data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        Self::new(header.dims, header.spacing_mm, intensities)
    }

    /// Replace this volume's labels with the grid stored at `header_path`.
    pub fn load_labels(&mut self, header_path: impl AsRef<Path>) -> Result<()> {
        let (header, data) = read_payload(header_path.as_ref(), "u8")?;
        if header.dims != self.dims {
            return Err(Error::InvalidHeader(format!(
                "label dims {:?} do not match volume dims {:?}",
                header.dims, self.dims
            )));
        }
        if data.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                found: data.len(),
            });
        }
        self.labels = data
            .into_iter()
            .map(Label::try_from)
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn load_with_labels(
        header_path: impl AsRef<Path>,
        label_header_path: impl AsRef<Path>,
    ) -> Result<Self> {
        let mut v = Self::load(header_path)?;
        v.load_labels(label_header_path)?;
        Ok(v)
    }

    pub fn save_intensities(&self, header_path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.len() * 2);
        for v in &self.intensities {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        write_payload(header_path.as_ref(), self.dims, self.spacing, "i16", &bytes)
    }

    pub fn save_labels(&self, header_path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        write_payload(header_path.as_ref(), self.dims, self.spacing, "u8", &bytes)
    }

    /// Writes `<stem>.json`/`<stem>.raw` and `<stem>.labels.json`/`<stem>.labels.raw`
    /// into `dir`, returning the two header paths.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        let vol = dir.join(format!("{stem}.json"));
        let lab = dir.join(format!("{stem}.labels.json"));
        self.save_intensities(&vol)?;
        self.save_labels(&lab)?;
        Ok((vol, lab))
    }

    /// 8-bit window-mapped slice. With `overlay_labels`, lumen voxels are
    /// drawn at 255 and everything else is capped at 254, so white pixels
    /// correspond one-to-one with lumen voxels.
    pub fn render_slice(&self, axis: Axis, index: usize, overlay_labels: bool) -> Result<SliceImage> {
        let extent = self.dims[axis.index()];
        if index >= extent {
            return Err(Error::OutOfRange {
                axis: axis.name(),
                index,
                extent,
            });
        }
        let [nx, ny, nz] = self.dims;
        let (width, height) = match axis {
            Axis::X => (ny, nz),
            Axis::Y => (nx, nz),
            Axis::Z => (nx, ny),
        };
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                let i = match axis {
                    Axis::X => self.index(index, col, row),
                    Axis::Y => self.index(col, index, row),
                    Axis::Z => self.index(col, row, index),
                };
                let mut g = window(self.intensities[i]);
                if overlay_labels {
                    g = if self.labels[i] == Label::Lumen { 255 } else { g.min(254) };
                }
                pixels.push(g);
            }
        }
        debug_assert_eq!(pixels.len(), width * height);
        Ok(SliceImage {
            width,
            height,
            pixels,
        })
    }

    pub fn export_slice(
        &self,
        axis: Axis,
        index: usize,
        overlay_labels: bool,
        path: impl AsRef<Path>,
    ) -> Result<SliceImage> {
        let img = self.render_slice(axis, index, overlay_labels)?;
        img.write_pgm(path)?;
        Ok(img)
    }
}

fn window(v: Hu) -> u8 {
    let t = ((v as f64 - WINDOW_MIN) / (WINDOW_MAX - WINDOW_MIN)).clamp(0.0, 1.0);
    (t * 255.0).round() as u8
}

fn read_payload(header_path: &Path, dtype: &str) -> Result<(VolumeHeader, Vec<u8>)> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header: VolumeHeader =
        serde_json::from_str(&text).map_err(|e| Error::json(header_path, e))?;
    if header.dtype != dtype {
        return Err(Error::InvalidHeader(format!(
            "expected dtype {dtype:?}, found {:?}",
            header.dtype
        )));
    }
    if header.order != "x-fastest" {
        return Err(Error::InvalidHeader(format!(
            "unsupported order {:?}",
            header.order
        )));
    }
    validate_geometry(header.dims, header.spacing_mm)?;
    let data_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.data_file);
    let data = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    Ok((header, data))
}

fn write_payload(
    header_path: &Path,
    dims: [usize; 3],
    spacing: [f64; 3],
    dtype: &str,
    bytes: &[u8],
) -> Result<()> {
    let raw_path = header_path.with_extension("raw");
    let data_file = raw_path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidHeader(format!("bad header path {header_path:?}")))?
        .to_string();
    let header = VolumeHeader {
        dims,
        spacing_mm: spacing,
        dtype: dtype.into(),
        order: "x-fastest".into(),
        data_file,
    };
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(header_path, e))?;
    fs::write(header_path, text).map_err(|e| Error::io(header_path, e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl SliceImage {
    /// Binary PGM (P5), maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn count_value(&self, v: u8) -> usize {
        self.pixels.iter().filter(|&&p| p == v).count()
    }
}
