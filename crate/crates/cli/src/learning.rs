use std::path::{Path, PathBuf};

use airway_core::bifurcation::code::{pool_gen1to4, pool_gen34};
use airway_core::bifurcation::AngleCode;
use airway_core::decision::{label_name, train_model, DecisionModel};
use airway_core::ml::{
    greedy_extend_to, pc_sweep, subset_search, CvConfig, Dataset, GreedyStep, PcaScope, Scaler, SizeBest, SubsetResult,
    SvmConfig, Sweep,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{ModelArgs, PredictArgs, ReportArgs, SearchArgs, SweepArgs, TrainArgs};
use crate::meta::{prepare_output, require_input, write_text, Run};
use crate::tables::{bar, percent, render};
use crate::{CliError, CliResult};

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn parse_codes(text: &str) -> CliResult<Vec<AngleCode>> {
    text.split(',')
        .map(|c| c.trim().parse().map_err(|e: airway_core::Error| CliError::Usage(e.to_string())))
        .collect()
}

fn resolve_pool(ds: &Dataset, pool: &str) -> CliResult<Vec<AngleCode>> {
    match pool {
        "all" => Ok(ds.features.clone()),
        "gen1to4" => Ok(pool_gen1to4()),
        "gen34" => Ok(pool_gen34()),
        list => parse_codes(list),
    }
}

fn cv_config(m: &ModelArgs) -> CliResult<CvConfig> {
    if !(m.c > 0.0 && m.c.is_finite()) {
        return usage("--c must be positive");
    }
    let scope: PcaScope = m.scope.parse().map_err(|e: airway_core::Error| CliError::Usage(e.to_string()))?;
    Ok(CvConfig {
        svm: SvmConfig {
            c: m.c,
            bias: !m.no_bias,
            ..Default::default()
        },
        scope,
    })
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    require_input(path)?;
    Ok(Dataset::load_csv(path)?)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("result serializes") + "\n"
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn sweep_rows(s: &Sweep) -> Vec<Vec<String>> {
    s.points
        .iter()
        .map(|p| {
            vec![
                p.k.to_string(),
                percent(p.accuracy),
                percent(p.sensitivity),
                percent(p.specificity),
                bar(p.accuracy),
            ]
        })
        .collect()
}

pub fn sweep(a: SweepArgs, argv: Vec<String>) -> CliResult<()> {
    let cfg = cv_config(&a.model)?;
    let inputs = vec![a.data.clone()];
    prepare_output(&a.out, &inputs)?;
    if let Some(p) = &a.csv {
        prepare_output(p, &inputs)?;
    }
    let ds = load_dataset(&a.data)?;
    let pool = resolve_pool(&ds, &a.pool)?;
    let result = pc_sweep(&ds, &pool, &cfg)?;
    write_text(&a.out, &to_json(&result))?;
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.csv {
        let mut text = String::from("k,accuracy,sensitivity,specificity\n");
        for m in &result.points {
            text.push_str(&format!("{},{:.4},{:.4},{:.4}\n", m.k, m.accuracy, m.sensitivity, m.specificity));
        }
        write_text(p, &text)?;
        outputs.push(p.clone());
    }
    print!("{}", render(&["PCs", "Accuracy", "Sensitivity", "Specificity", ""], &sweep_rows(&result)));
    println!("best k = {}", result.best_k);
    let run = Run {
        subcommand: "sweep",
        args: argv,
        seed: a.common.seed,
        inputs,
        outputs,
    };
    run.write(&json!({ "options": a, "config": cfg, "pool": pool }))
}

#[derive(Serialize, Deserialize)]
pub struct SearchReport {
    pub subjects: usize,
    pub controls: usize,
    pub positives: usize,
    pub pool: Vec<AngleCode>,
    pub config: CvConfig,
    pub sizes: Vec<SizeBest>,
    /// Starts from the largest exhaustive winner; the first step repeats it.
    pub greedy: Vec<GreedyStep>,
}

impl SearchReport {
    /// One best subset per size, exhaustive sizes first.
    pub fn best_by_size(&self) -> Vec<&SubsetResult> {
        let mut out: Vec<&SubsetResult> = self.sizes.iter().map(|s| &s.best).collect();
        out.extend(self.greedy.iter().skip(1).map(|g| &g.best));
        out
    }
}

fn search_table(r: &SearchReport) -> String {
    let rows: Vec<Vec<String>> = r
        .best_by_size()
        .iter()
        .map(|b| {
            vec![
                b.angles.len().to_string(),
                b.angles.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "),
                percent(b.metrics.accuracy),
                percent(b.metrics.sensitivity),
                percent(b.metrics.specificity),
                b.k.to_string(),
            ]
        })
        .collect();
    render(&["Size", "Angles", "Accuracy", "Sensitivity", "Specificity", "PCs"], &rows)
}

pub fn search(a: SearchArgs, argv: Vec<String>) -> CliResult<()> {
    let cfg = cv_config(&a.model)?;
    let inputs = vec![a.data.clone()];
    prepare_output(&a.out, &inputs)?;
    if let Some(p) = &a.table {
        prepare_output(p, &inputs)?;
    }
    let ds = load_dataset(&a.data)?;
    let pool = resolve_pool(&ds, &a.pool)?;
    if a.max_size == 0 || a.max_size > pool.len() {
        return usage(format!("--max-size must be in 1..={}", pool.len()));
    }
    if let Some(g) = a.greedy_to {
        if g <= a.max_size || g > pool.len() {
            return usage(format!("--greedy-to must be in {}..={}", a.max_size + 1, pool.len()));
        }
    }
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let (sizes, greedy) = threads.install(|| -> CliResult<_> {
        let sizes = subset_search(&ds, &pool, a.max_size, &cfg)?;
        let greedy = match a.greedy_to {
            Some(to) => {
                let seed = &sizes.last().expect("max_size >= 1").best.angles;
                greedy_extend_to(&ds, seed, &pool, to, &cfg)?
            }
            None => Vec::new(),
        };
        Ok((sizes, greedy))
    })?;
    let (controls, positives) = ds.class_counts();
    let report = SearchReport {
        subjects: ds.n(),
        controls,
        positives,
        pool: pool.clone(),
        config: cfg,
        sizes,
        greedy,
    };
    write_text(&a.out, &to_json(&report))?;
    let table = search_table(&report);
    print!("{table}");
    for s in &report.sizes {
        println!("size {}: {} subsets, {} models", s.size, s.subsets_evaluated, s.models_evaluated);
    }
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.table {
        write_text(p, &table)?;
        outputs.push(p.clone());
    }
    let run = Run {
        subcommand: "search",
        args: argv,
        seed: a.common.seed,
        inputs,
        outputs,
    };
    run.write(&json!({ "options": a, "config": cfg, "pool": pool }))
}

pub fn train(a: TrainArgs, argv: Vec<String>) -> CliResult<()> {
    let cfg = cv_config(&a.model)?;
    let angles = match DecisionModel::builtin(&a.angles) {
        Some(m) => m.angles,
        None => parse_codes(&a.angles)?,
    };
    let inputs = vec![a.data.clone()];
    prepare_output(&a.out, &inputs)?;
    if let Some(p) = &a.scaler_out {
        prepare_output(p, &inputs)?;
    }
    let ds = load_dataset(&a.data)?;
    let trained = train_model(&ds, &angles, a.k, &cfg.svm)?;
    trained.model.save(&a.out)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.scaler_out {
        let scaler = Scaler {
            means: trained.model.means.clone(),
            stds: trained.model.stds.clone(),
        };
        write_text(p, &to_json(&scaler))?;
        outputs.push(p.clone());
    }
    println!("training accuracy {}", percent(trained.training_accuracy));
    let run = Run {
        subcommand: "train",
        args: argv,
        seed: a.common.seed,
        inputs,
        outputs,
    };
    run.write(&json!({ "options": a, "svm": cfg.svm, "angles": angles }))
}

/// Subject ids and, per subject, the model's angles in model order.
fn read_measurements(path: &Path, angles: &[AngleCode]) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let data = |e: String| CliError::Data(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| data(e.to_string()))?;
    let headers = reader.headers().map_err(|e| data(e.to_string()))?.clone();
    let id_col = headers
        .iter()
        .position(|h| h.trim() == "subject_id")
        .ok_or_else(|| data("no subject_id column".into()))?;
    let cols = angles
        .iter()
        .map(|a| {
            headers
                .iter()
                .position(|h| h.trim().parse::<AngleCode>().is_ok_and(|c| &c == a))
                .ok_or_else(|| data(format!("missing angle column {a}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data(e.to_string()))?;
        let id = record.get(id_col).unwrap_or_default().trim().to_string();
        let values = cols
            .iter()
            .map(|&c| {
                let cell = record.get(c).unwrap_or_default().trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| data(format!("row {}: bad value {cell:?} in column {}", line + 2, &headers[c])))
            })
            .collect::<CliResult<Vec<_>>>()?;
        ids.push(id);
        rows.push(values);
    }
    Ok((ids, rows))
}

pub fn predict(a: PredictArgs, argv: Vec<String>) -> CliResult<()> {
    let mut inputs = Vec::new();
    let mut model = match DecisionModel::builtin(&a.model) {
        Some(m) => m,
        None => {
            let path = PathBuf::from(&a.model);
            require_input(&path)?;
            inputs.push(path.clone());
            DecisionModel::load(&path)?
        }
    };
    if let Some(path) = &a.scaler {
        require_input(path)?;
        inputs.push(path.clone());
        let scaler: Scaler = read_json(path)?;
        model = model.with_scaler(&scaler)?;
    }
    require_input(&a.input)?;
    inputs.push(a.input.clone());
    prepare_output(&a.out, &inputs)?;
    if !model.has_scaler() {
        return Err(airway_core::Error::ScalerRequired.into());
    }
    let (ids, rows) = read_measurements(&a.input, &model.angles)?;
    let mut text = String::from("subject_id,score,label\n");
    let mut positives = 0;
    for (id, x) in ids.iter().zip(&rows) {
        let p = model.predict_raw(x)?;
        positives += p.label as usize;
        text.push_str(&format!("{id},{:.6},{}\n", p.score, p.label));
    }
    write_text(&a.out, &text)?;
    println!("{} subjects: {positives} {}, {} {}", ids.len(), label_name(1), ids.len() - positives, label_name(0));
    let run = Run {
        subcommand: "predict",
        args: argv,
        seed: a.common.seed,
        inputs,
        outputs: vec![a.out.clone()],
    };
    run.write(&json!({ "options": a, "angles": model.angles }))
}

pub fn report(a: ReportArgs, argv: Vec<String>) -> CliResult<()> {
    if a.search.is_none() && a.sweep.is_none() {
        return usage("give --search, --sweep or both");
    }
    let inputs: Vec<PathBuf> = a.search.iter().chain(&a.sweep).cloned().collect();
    for p in &inputs {
        require_input(p)?;
    }
    prepare_output(&a.out, &inputs)?;
    let mut text = String::new();
    if let Some(path) = &a.search {
        let r: SearchReport = read_json(path)?;
        text.push_str(&format!(
            "Best angle subset by size ({} subjects: {} positive, {} control)\n\n",
            r.subjects, r.positives, r.controls
        ));
        text.push_str(&search_table(&r));
        text.push_str("\nPeak LOOCV accuracy by subset size\n\n");
        let rows: Vec<Vec<String>> = r
            .best_by_size()
            .iter()
            .map(|b| vec![b.angles.len().to_string(), percent(b.metrics.accuracy), bar(b.metrics.accuracy)])
            .collect();
        text.push_str(&render(&["Size", "Accuracy", ""], &rows));
    }
    if let Some(path) = &a.sweep {
        let s: Sweep = read_json(path)?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str("LOOCV accuracy by number of principal components\n\n");
        text.push_str(&render(&["PCs", "Accuracy", "Sensitivity", "Specificity", ""], &sweep_rows(&s)));
        text.push_str(&format!("\nbest: {} components\n", s.best_k));
    }
    write_text(&a.out, &text)?;
    print!("{text}");
    let run = Run {
        subcommand: "report",
        args: argv,
        seed: a.common.seed,
        inputs,
        outputs: vec![a.out.clone()],
    };
    run.write(&json!({ "options": a }))
}
