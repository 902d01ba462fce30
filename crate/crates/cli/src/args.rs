use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "airway", version, about = "Airway phantoms, segmentation, branching angles and angle-based classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic airway volume with ground truth.
    Phantom(PhantomArgs),
    /// Label the airway lumen by gated flood fill.
    Segment(SegmentArgs),
    /// Write one slice as an 8-bit PGM image.
    ExportSlice(ExportSliceArgs),
    /// Fit the bifurcation model down the segmented tree and list angles.
    Extract(ExtractArgs),
    /// LOOCV accuracy for every number of principal components.
    Sweep(SweepArgs),
    /// Best angle subset of each size, exhaustively and then greedily.
    Search(SearchArgs),
    /// Fit a decision model on all subjects.
    Train(TrainArgs),
    /// Apply a decision model to new measurements.
    Predict(PredictArgs),
    /// Render search and sweep results as text tables.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Seed for every random choice in the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Tube,
    Bifurcation,
    FourGeneration,
    Large,
}

#[derive(Args, Debug, Serialize)]
pub struct PhantomArgs {
    /// Phantom specification JSON.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Daughter angles for the bifurcation preset, degrees.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub angles: Option<Vec<f64>>,
    /// Override the voxel spacing, mm.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub spacing: Option<Vec<f64>>,
    /// Gaussian HU noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Open a leak through the wall of this branch, e.g. B1.
    #[arg(long)]
    pub pinhole: Option<String>,
    /// City-block radius of the leak in voxels.
    #[arg(long, default_value_t = 0)]
    pub pinhole_radius: u32,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "phantom")]
    pub stem: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct SegmentArgs {
    /// Volume header JSON.
    #[arg(long)]
    pub volume: PathBuf,
    /// Ground truth written by `phantom`; supplies the seed voxels.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Lumen seed voxel x,y,z.
    #[arg(long)]
    pub trachea: Option<String>,
    /// Parenchyma seed voxel x,y,z; enables the two-phase fill.
    #[arg(long)]
    pub parenchyma: Option<String>,
    /// Voxels below this HU count as air.
    #[arg(long, default_value_t = airway_core::volume::DEFAULT_AIR_THRESHOLD, allow_hyphen_values = true)]
    pub threshold: i16,
    /// Hole gate for the lumen fill.
    #[arg(long, default_value_t = 0)]
    pub hole_size: u32,
    /// Hole gate for the parenchyma fill.
    #[arg(long, default_value_t = 2)]
    pub parenchyma_hole_size: u32,
    /// Stop each fill after this many voxels.
    #[arg(long)]
    pub cap: Option<usize>,
    /// 6 or 26.
    #[arg(long, default_value_t = 6)]
    pub connectivity: u8,
    /// Plug box x0:x1,y0:y1,z0:z1 (repeatable).
    #[arg(long)]
    pub plug: Vec<String>,
    /// JSON list of plug boxes, as strings or {lo, hi} objects.
    #[arg(long)]
    pub plug_file: Option<PathBuf>,
    /// Label grid header to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct ExportSliceArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Label grid; required for --overlay.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// x, y or z.
    #[arg(long, default_value = "z")]
    pub axis: String,
    #[arg(long)]
    pub index: usize,
    /// Draw lumen voxels white.
    #[arg(long)]
    pub overlay: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Label grid with the lumen marked.
    #[arg(long)]
    pub labels: PathBuf,
    /// Ground truth whose tracheal starting guess is used.
    #[arg(long, conflicts_with = "init", required_unless_present = "init")]
    pub truth: Option<PathBuf>,
    /// Starting parameters for the tracheal fit.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Generations whose angles are listed, e.g. 1-4 or 3-4.
    #[arg(long, default_value = "1-4")]
    pub generations: String,
    /// Fits per child bifurcation.
    #[arg(long, default_value_t = 2)]
    pub starts: usize,
    /// Annealing evaluations per fit.
    #[arg(long, default_value_t = 20_000)]
    pub max_evals: usize,
    /// Descend only into daughters at least this many voxels wide.
    #[arg(long, default_value_t = 6.0)]
    pub min_diameter_voxels: f64,
    /// Tree JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Angle list CSV to write.
    #[arg(long)]
    pub angles_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModelArgs {
    /// SVM soft-margin constant.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Fit without an intercept, like the built-in rules.
    #[arg(long)]
    pub no_bias: bool,
    /// Fit scaler and PCA per training fold or once on all rows.
    #[arg(long, default_value = "fold")]
    pub scope: String,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    /// Dataset CSV: subject_id,label,<angle codes>.
    #[arg(long)]
    pub data: PathBuf,
    /// all, gen1to4, gen34 or a comma-separated list of codes.
    #[arg(long, default_value = "all")]
    pub pool: String,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Sweep JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the curve as k,accuracy,sensitivity,specificity.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "gen34")]
    pub pool: String,
    /// Largest subset size searched exhaustively.
    #[arg(long, default_value_t = 4)]
    pub max_size: usize,
    /// Grow the best subset greedily up to this size afterwards.
    #[arg(long)]
    pub greedy_to: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Search JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Text table to write; it is printed either way.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated codes, or builtin3 / builtin5 for their angle sets.
    #[arg(long)]
    pub angles: String,
    /// Principal components used.
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Model JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the scaler alone.
    #[arg(long)]
    pub scaler_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    /// builtin3, builtin5 or a model JSON.
    #[arg(long)]
    pub model: String,
    /// Scaler JSON {means, stds}; replaces the model's own.
    #[arg(long)]
    pub scaler: Option<PathBuf>,
    /// CSV with subject_id and the model's angle columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV subject_id,score,label.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// JSON written by `search`.
    #[arg(long)]
    pub search: Option<PathBuf>,
    /// JSON written by `sweep`.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}
