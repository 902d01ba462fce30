//! Browser bindings: the built-in decision rules, a leak-prone flood fill
//! on a generated phantom, and a subset search on planted data.
//!
//! Each operation has a plain Rust entry point returning JSON so it can be
//! tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use airway_core::bifurcation::BranchCode;
use airway_core::decision::{label_name, DecisionModel};
use airway_core::flood_fill::{limited_flood_fill, segment_airways, FillConfig, FillReport};
use airway_core::ml::{subset_search, CvConfig, PlantedSpec};
use airway_core::phantom::{find_pinhole_site, generate_phantom, inject_pinhole, GroundTruth, PhantomSpec, VoxelClass};
use airway_core::volume::{Label, Volume, VoxelCoord, DEFAULT_AIR_THRESHOLD, WINDOW_MAX, WINDOW_MIN};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest subset size the demo will search; size 3 already takes seconds
/// natively.
pub const MAX_DEMO_SUBSET: usize = 2;

#[derive(Serialize)]
struct Scored {
    model: String,
    angles: Vec<String>,
    rotated: Vec<f64>,
    score: f64,
    label: u8,
    label_name: &'static str,
}

/// Scores standardized angle values with `builtin3` or `builtin5`.
pub fn score_builtin_json(model: &str, values: &[f64]) -> Result<String, String> {
    let m = DecisionModel::builtin(model).ok_or_else(|| format!("unknown model {model:?}"))?;
    let pred = m.predict_normalized(values).map_err(|e| e.to_string())?;
    let rotated = m.p.iter().map(|row| row.iter().zip(values).map(|(a, b)| a * b).sum()).collect();
    let out = Scored {
        model: model.to_string(),
        angles: m.angles.iter().map(|a| a.to_string()).collect(),
        rotated,
        score: pred.score,
        label: pred.label,
        label_name: label_name(pred.label),
    };
    Ok(serde_json::to_string(&out).expect("serializable"))
}

#[wasm_bindgen]
pub fn score_builtin(model: &str, values: &[f64]) -> Result<String, JsValue> {
    score_builtin_json(model, values).map_err(|e| JsValue::from_str(&e))
}

/// Angle codes a built-in model expects, comma separated.
#[wasm_bindgen]
pub fn builtin_angles(model: &str) -> String {
    DecisionModel::builtin(model)
        .map(|m| m.angles.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","))
        .unwrap_or_default()
}

/// Generated single bifurcation, optionally holed, kept between fills so
/// the page can rerun with different settings.
#[wasm_bindgen]
pub struct FillDemo {
    volume: Volume,
    truth: GroundTruth,
    pinhole: Option<VoxelCoord>,
}

#[derive(Serialize)]
struct FillSummary {
    lumen: usize,
    /// Lumen-labelled voxels outside the true airway.
    leaked: usize,
    parenchyma: usize,
    true_lumen: usize,
    lumen_report: FillReport,
    parenchyma_report: Option<FillReport>,
}

impl FillDemo {
    /// `pinhole_radius` opens a hole in the first daughter's wall.
    pub fn build(angle1: f64, angle2: f64, pinhole_radius: Option<u32>) -> Result<Self, String> {
        let spec = PhantomSpec::single_bifurcation(angle1, angle2, [1.0; 3]);
        let (mut volume, truth) = generate_phantom(&spec).map_err(|e| e.to_string())?;
        let mut pinhole = None;
        if let Some(r) = pinhole_radius {
            let code = BranchCode::root().child(1);
            let at = find_pinhole_site(&truth, volume.dims(), &code).ok_or("no wall site for a pinhole")?;
            inject_pinhole(&mut volume, at, r, spec.lumen_hu, DEFAULT_AIR_THRESHOLD).map_err(|e| e.to_string())?;
            pinhole = Some(at);
        }
        Ok(Self { volume, truth, pinhole })
    }

    /// Fills from the trachea; with `shield`, the exterior is filled first
    /// with hole size 2 so a wall gap cannot pass the lumen front.
    pub fn fill_json(&mut self, hole_size: u32, shield: bool) -> Result<String, String> {
        self.volume.clear_labels();
        let lumen_cfg = FillConfig::new(self.truth.trachea_seed, Label::Lumen).with_hole_size(hole_size);
        let (parenchyma_report, lumen_report) = if shield {
            let pcfg = FillConfig::new(self.truth.parenchyma_seed, Label::Parenchyma).with_hole_size(2);
            let (p, l) = segment_airways(&mut self.volume, &pcfg, &lumen_cfg, &[]).map_err(|e| e.to_string())?;
            (Some(p), l)
        } else {
            (None, limited_flood_fill(&mut self.volume, &lumen_cfg, &[]).map_err(|e| e.to_string())?)
        };
        let labels = self.volume.labels();
        let leaked = (0..labels.len())
            .filter(|&i| labels[i] == Label::Lumen && self.truth.class_at(i) == VoxelClass::Exterior)
            .count();
        let summary = FillSummary {
            lumen: self.volume.count_label(Label::Lumen),
            leaked,
            parenchyma: self.volume.count_label(Label::Parenchyma),
            true_lumen: self.truth.lumen_voxels,
            lumen_report,
            parenchyma_report,
        };
        Ok(serde_json::to_string(&summary).expect("serializable"))
    }

    /// Coronal slice (x across, z down) as RGBA, the plane the phantom
    /// branches in: windowed grey, true lumen blue, leaked voxels red,
    /// exterior fill tinted green.
    pub fn slice_pixels(&self, y: usize) -> Vec<u8> {
        let [nx, ny, nz] = self.volume.dims();
        let y = y.min(ny - 1);
        let mut out = Vec::with_capacity(nx * nz * 4);
        for z in 0..nz {
            for x in 0..nx {
                let i = self.volume.index(x, y, z);
                let hu = self.volume.intensities()[i] as f64;
                let g = ((hu - WINDOW_MIN) / (WINDOW_MAX - WINDOW_MIN) * 255.0).clamp(0.0, 255.0) as u8;
                let rgb = match self.volume.labels()[i] {
                    Label::Lumen if self.truth.class_at(i) == VoxelClass::Lumen => [40, 140, 255],
                    Label::Lumen => [235, 40, 40],
                    Label::Parenchyma => [g / 2, g / 2 + 90, g / 2],
                    Label::Plug => [230, 200, 40],
                    _ => [g, g, g],
                };
                out.extend_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
            }
        }
        out
    }
}

#[wasm_bindgen]
impl FillDemo {
    /// A negative radius means no pinhole.
    #[wasm_bindgen(constructor)]
    pub fn new(angle1: f64, angle2: f64, pinhole_radius: i32) -> Result<FillDemo, JsValue> {
        let r = u32::try_from(pinhole_radius).ok();
        Self::build(angle1, angle2, r).map_err(|e| JsValue::from_str(&e))
    }

    pub fn fill(&mut self, hole_size: u32, shield: bool) -> Result<String, JsValue> {
        self.fill_json(hole_size, shield).map_err(|e| JsValue::from_str(&e))
    }

    pub fn slice_rgba(&self, z: usize) -> Vec<u8> {
        self.slice_pixels(z)
    }

    pub fn width(&self) -> usize {
        self.volume.dims()[0]
    }

    pub fn height(&self) -> usize {
        self.volume.dims()[2]
    }

    /// Number of coronal slices.
    pub fn slices(&self) -> usize {
        self.volume.dims()[1]
    }

    /// The pinhole's slice, or the middle one.
    pub fn suggested_slice(&self) -> usize {
        self.pinhole.map_or(self.slices() / 2, |c| c.y)
    }
}

/// Best subset per size on a planted 31/23 dataset whose informative pair
/// is separated by `gap_sd` standard deviations.
pub fn planted_search_json(seed: u64, gap_sd: f64, max_size: usize) -> Result<String, String> {
    let mut spec = PlantedSpec::standard_cohort(seed);
    spec.gap_sd = gap_sd;
    let ds = spec.generate().map_err(|e| e.to_string())?;
    let planted: Vec<String> = spec.informative.iter().map(|&j| spec.features[j].to_string()).collect();
    let sizes = subset_search(&ds, &spec.features, max_size.clamp(1, MAX_DEMO_SUBSET), &CvConfig::default())
        .map_err(|e| e.to_string())?;
    let rows: Vec<_> = sizes
        .iter()
        .map(|s| {
            let m = &s.best.metrics;
            json!({
                "size": s.size,
                "subsets": s.subsets_evaluated,
                "angles": s.best.angles.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                "k": s.best.k,
                "accuracy": m.accuracy,
                "sensitivity": m.sensitivity,
                "specificity": m.specificity,
            })
        })
        .collect();
    Ok(json!({ "planted": planted, "sizes": rows }).to_string())
}

#[wasm_bindgen]
pub fn planted_search(seed: u64, gap_sd: f64, max_size: usize) -> Result<String, JsValue> {
    planted_search_json(seed, gap_sd, max_size).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn builtin_score_matches_the_rule() {
        let v: Value = serde_json::from_str(&score_builtin_json("builtin3", &[0.0; 3]).unwrap()).unwrap();
        assert_eq!(v["score"], 0.0);
        assert_eq!(v["label_name"], "control");
        assert_eq!(v["angles"].as_array().unwrap().len(), 3);
        assert!(score_builtin_json("builtin3", &[1.0; 5]).is_err());
        assert!(score_builtin_json("nope", &[1.0; 3]).is_err());
        assert_eq!(builtin_angles("builtin5").split(',').count(), 5);
    }

    #[test]
    fn shield_stops_the_pinhole_leak() {
        let mut demo = FillDemo::build(35.0, 55.0, Some(1)).unwrap();
        let open: Value = serde_json::from_str(&demo.fill_json(0, false).unwrap()).unwrap();
        assert!(open["leaked"].as_u64().unwrap() > 0);
        let shielded: Value = serde_json::from_str(&demo.fill_json(0, true).unwrap()).unwrap();
        assert_eq!(shielded["leaked"], 0);
        assert!(shielded["lumen"].as_u64().unwrap() > 0);
        let px = demo.slice_pixels(demo.suggested_slice());
        assert_eq!(px.len(), demo.width() * demo.height() * 4);
    }

    #[test]
    fn intact_phantom_does_not_leak() {
        let mut demo = FillDemo::build(35.0, 55.0, None).unwrap();
        let v: Value = serde_json::from_str(&demo.fill_json(0, false).unwrap()).unwrap();
        assert_eq!(v["leaked"], 0);
        assert_eq!(v["lumen"], v["true_lumen"]);
    }

    #[test]
    fn planted_search_reports_each_size() {
        let v: Value = serde_json::from_str(&planted_search_json(1, 3.0, 5).unwrap()).unwrap();
        let sizes = v["sizes"].as_array().unwrap();
        assert_eq!(sizes.len(), MAX_DEMO_SUBSET);
        assert_eq!(sizes[1]["subsets"], 190);
        assert_eq!(v["planted"].as_array().unwrap().len(), 2);
    }
}
