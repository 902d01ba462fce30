use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use airway_core::bifurcation::{collect_angles, extract_tree, BifurcationParams, BranchCode, ExtractConfig};
use airway_core::flood_fill::{limited_flood_fill, segment_airways, Connectivity, FillConfig, PlugBox};
use airway_core::phantom::{find_pinhole_site, generate_phantom, inject_pinhole, GroundTruth, PhantomSpec};
use airway_core::volume::{Axis, Label, Volume, VoxelCoord, DEFAULT_AIR_THRESHOLD};
use serde::Deserialize;
use serde_json::json;

use crate::args::{ExportSliceArgs, ExtractArgs, PhantomArgs, Preset, SegmentArgs};
use crate::meta::{prepare_output, require_input, volume_files, write_text, Run};
use crate::{CliError, CliResult};

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn parse_voxel(text: &str) -> CliResult<VoxelCoord> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("voxel must be x,y,z, got {text:?}")))?;
    match parts[..] {
        [x, y, z] => Ok(VoxelCoord::new(x, y, z)),
        _ => usage(format!("voxel must be x,y,z, got {text:?}")),
    }
}

fn label_files(header: &Path) -> Vec<PathBuf> {
    vec![header.to_path_buf(), header.with_extension("raw")]
}

pub fn phantom(a: PhantomArgs, argv: Vec<String>) -> CliResult<()> {
    let mut inputs = Vec::new();
    let mut spec = match (&a.spec, a.preset) {
        (Some(path), _) => {
            require_input(path)?;
            inputs.push(path.clone());
            PhantomSpec::load(path)?
        }
        (None, Some(Preset::Tube)) => PhantomSpec::single_tube(12.0, 60.0, [1.0; 3]),
        (None, Some(Preset::Bifurcation)) => {
            let angles = a.angles.clone().unwrap_or(vec![35.0, 55.0]);
            PhantomSpec::single_bifurcation(angles[0], angles[1], [0.5, 0.5, 1.0])
        }
        (None, Some(Preset::FourGeneration)) => PhantomSpec::four_generation(a.common.seed),
        (None, Some(Preset::Large)) => PhantomSpec::large(a.common.seed),
        (None, None) => return usage("one of --spec or --preset is required"),
    };
    if a.angles.is_some() && a.preset != Some(Preset::Bifurcation) {
        return usage("--angles applies to the bifurcation preset only");
    }
    if let Some(s) = &a.spacing {
        spec.spacing_mm = [s[0], s[1], s[2]];
    }
    if let Some(sd) = a.noise {
        spec.noise_sd = sd;
    }
    if a.spec.is_none() || a.common.seed != 0 {
        spec.rng_seed = a.common.seed;
    }
    let pinhole: Option<BranchCode> = match &a.pinhole {
        Some(code) => Some(code.parse().map_err(|e: airway_core::Error| CliError::Usage(e.to_string()))?),
        None => None,
    };
    let vol_path = a.out.join(format!("{}.json", a.stem));
    let truth_path = a.out.join(format!("{}.truth.json", a.stem));
    let spec_path = a.out.join(format!("{}.spec.json", a.stem));
    for p in [&vol_path, &truth_path, &spec_path] {
        prepare_output(p, &inputs)?;
    }

    let (mut volume, truth) = generate_phantom(&spec)?;
    let mut site = None;
    if let Some(code) = &pinhole {
        let at = find_pinhole_site(&truth, volume.dims(), code)
            .ok_or_else(|| CliError::Data(format!("no wall site for a pinhole on {code}")))?;
        inject_pinhole(&mut volume, at, a.pinhole_radius, spec.lumen_hu, DEFAULT_AIR_THRESHOLD)?;
        site = Some(at);
    }
    let (_, labels_path) = volume.save(&a.out, &a.stem)?;
    truth.save(&truth_path)?;
    write_text(&spec_path, &(serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n"))?;
    println!(
        "dims {:?}, spacing {:?} mm, lumen voxels {}{}",
        volume.dims(),
        volume.spacing(),
        truth.lumen_voxels,
        site.map(|s| format!(", pinhole at {},{},{}", s.x, s.y, s.z)).unwrap_or_default()
    );
    let run = Run {
        subcommand: "phantom",
        args: argv,
        seed: a.common.seed,
        inputs,
        outputs: vec![vol_path.clone(), vol_path.with_extension("raw"), labels_path, truth_path, spec_path],
    };
    run.write(&json!({ "options": a, "pinhole_site": site }))
}

fn fill_config(seed: VoxelCoord, label: Label, hole: u32, a: &SegmentArgs, conn: Connectivity) -> FillConfig {
    let mut cfg = FillConfig::new(seed, label)
        .with_hole_size(hole)
        .with_connectivity(conn)
        .with_threshold(a.threshold);
    if let Some(cap) = a.cap {
        cfg = cfg.with_cap(cap);
    }
    cfg
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PlugEntry {
    Text(String),
    Box(PlugBox),
}

pub fn segment(a: SegmentArgs, argv: Vec<String>) -> CliResult<()> {
    let mut inputs = volume_files(&a.volume)?;
    let connectivity = Connectivity::try_from(a.connectivity).map_err(CliError::Usage)?;
    let mut plugs = a
        .plug
        .iter()
        .map(|p| p.parse::<PlugBox>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(path) = &a.plug_file {
        require_input(path)?;
        inputs.push(path.clone());
        for entry in read_json::<Vec<PlugEntry>>(path)? {
            plugs.push(match entry {
                PlugEntry::Text(t) => t.parse().map_err(|e: airway_core::Error| CliError::Data(e.to_string()))?,
                PlugEntry::Box(b) => b,
            });
        }
    }
    let truth: Option<GroundTruth> = match &a.truth {
        Some(path) => {
            require_input(path)?;
            inputs.push(path.clone());
            Some(read_json(path)?)
        }
        None => None,
    };
    let trachea = match (&a.trachea, &truth) {
        (Some(t), _) => parse_voxel(t)?,
        (None, Some(t)) => t.trachea_seed,
        (None, None) => return usage("a lumen seed is needed: --trachea x,y,z or --truth"),
    };
    let parenchyma = match (&a.parenchyma, &truth) {
        (Some(p), _) => Some(parse_voxel(p)?),
        (None, Some(t)) => Some(t.parenchyma_seed),
        (None, None) => None,
    };
    prepare_output(&a.out, &inputs)?;

    let mut volume = Volume::load(&a.volume)?;
    let lumen_cfg = fill_config(trachea, Label::Lumen, a.hole_size, &a, connectivity);
    let reports = match parenchyma {
        Some(p) => {
            let pcfg = fill_config(p, Label::Parenchyma, a.parenchyma_hole_size, &a, connectivity);
            let (pr, lr) = segment_airways(&mut volume, &pcfg, &lumen_cfg, &plugs)?;
            vec![("parenchyma", pr), ("lumen", lr)]
        }
        None => {
            airway_core::flood_fill::apply_plugs(&mut volume, &plugs)?;
            vec![("lumen", limited_flood_fill(&mut volume, &lumen_cfg, &[])?)]
        }
    };
    volume.save_labels(&a.out)?;
    for (name, r) in &reports {
        println!(
            "{name}: {} voxels, {} layers, {:?}",
            r.voxels_filled, r.front_layers, r.stop_reason
        );
    }
    let run = Run {
        subcommand: "segment",
        args: argv,
        seed: a.common.seed,
        inputs,
        outputs: label_files(&a.out),
    };
    let reports: serde_json::Map<String, serde_json::Value> = reports
        .into_iter()
        .map(|(n, r)| (n.to_string(), serde_json::to_value(r).expect("report serializes")))
        .collect();
    run.write(&json!({
        "options": a,
        "lumen_seed": trachea,
        "parenchyma_seed": parenchyma,
        "plugs": plugs,
        "fill_reports": reports,
    }))
}

pub fn export_slice(a: ExportSliceArgs, argv: Vec<String>) -> CliResult<()> {
    let axis: Axis = a.axis.parse().map_err(|e: airway_core::Error| CliError::Usage(e.to_string()))?;
    let mut inputs = volume_files(&a.volume)?;
    if a.overlay && a.labels.is_none() {
        return usage("--overlay needs --labels");
    }
    if let Some(l) = &a.labels {
        inputs.extend(volume_files(l)?);
    }
    prepare_output(&a.out, &inputs)?;
    let mut volume = Volume::load(&a.volume)?;
    if let Some(l) = &a.labels {
        volume.load_labels(l)?;
    }
    let img = volume.export_slice(axis, a.index, a.overlay, &a.out)?;
    println!("{}x{} slice written to {}", img.width, img.height, a.out.display());
    let run = Run {
        subcommand: "export-slice",
        args: argv,
        seed: a.common.seed,
        inputs,
        outputs: vec![a.out.clone()],
    };
    run.write(&json!({ "options": a }))
}

fn parse_generations(text: &str) -> CliResult<BTreeSet<usize>> {
    let bad = || CliError::Usage(format!("generations must look like 3-4 or 2, got {text:?}"));
    let (lo, hi) = match text.split_once('-') {
        Some((lo, hi)) => (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?),
        None => {
            let g = text.trim().parse().map_err(|_| bad())?;
            (g, g)
        }
    };
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

pub fn extract(a: ExtractArgs, argv: Vec<String>) -> CliResult<()> {
    let generations = parse_generations(&a.generations)?;
    let mut inputs = volume_files(&a.volume)?;
    inputs.extend(volume_files(&a.labels)?);
    let init: BifurcationParams = match (&a.truth, &a.init) {
        (Some(path), _) => {
            require_input(path)?;
            inputs.push(path.clone());
            read_json::<GroundTruth>(path)?.trachea_init
        }
        (None, Some(path)) => {
            require_input(path)?;
            inputs.push(path.clone());
            read_json(path)?
        }
        (None, None) => return usage("one of --truth or --init is required"),
    };
    let mut cfg = ExtractConfig {
        starts: a.starts,
        min_diameter_voxels: a.min_diameter_voxels,
        ..Default::default()
    };
    cfg.optimizer.max_evals = a.max_evals;
    cfg.optimizer.seed = a.common.seed;
    if cfg.starts == 0 {
        return usage("--starts must be at least 1");
    }
    prepare_output(&a.out, &inputs)?;
    if let Some(p) = &a.angles_out {
        prepare_output(p, &inputs)?;
    }

    let volume = Volume::load_with_labels(&a.volume, &a.labels)?;
    let tree = extract_tree(&volume, &init, &cfg)?;
    tree.save(&a.out)?;
    let angles = collect_angles(&tree, &generations);
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.angles_out {
        write_text(p, &angles.to_csv())?;
        outputs.push(p.clone());
    }
    for (code, e) in &tree.entries {
        let [a1, a2] = e.angles_deg();
        println!(
            "{code}: A1 {a1:.2} A2 {a2:.2} residual {:.4} {}",
            e.residual,
            if e.converged { "converged" } else { "not converged" }
        );
    }
    println!("{} angles, {} missing", angles.angles.len(), angles.missing.len());
    let run = Run {
        subcommand: "extract",
        args: argv,
        seed: a.common.seed,
        inputs,
        outputs,
    };
    run.write(&json!({ "options": a, "config": cfg }))
}
