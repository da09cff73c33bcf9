use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Spectral reflectance and illuminant estimation from interreflections in
/// folded V-cavities.
#[derive(Debug, Parser, Serialize)]
#[command(name = "interspec", version, about)]
pub struct Cli {
    /// JSON file of flag values; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Kernel cache directory (default: $INTERSPEC_CACHE, else .interspec-cache).
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Estimate and cache the geometric kernel of a cavity.
    Kernel(KernelArgs),
    /// Render one panel image of a uniform surface.
    Render(RenderArgs),
    /// Generate rendered corpora.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train the estimation network.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Recover a reflectance from one image with a known illuminant.
    Estimate(EstimateArgs),
    /// Train and test across cavity angles.
    AngleStudy(AngleStudyArgs),
    /// Build a flat-surface metamer and show it separating when folded.
    Metamer(MetamerArgs),
    /// Collate run outputs into markdown and CSV tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeometryArgs {
    /// Opening angle of the cavity in degrees.
    #[arg(long, default_value_t = 45.0)]
    pub angle: f64,
    /// Facets along each side of a panel.
    #[arg(long, default_value_t = 10)]
    pub facets: usize,
    /// Monte Carlo samples per facet pair.
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    /// Seed of the kernel estimator.
    #[arg(long, default_value_t = 0)]
    pub kernel_seed: u64,
    /// Use point-pair sampling instead of the point-to-facet estimator.
    #[arg(long)]
    pub point_pair: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Also write the kernel matrix to this file.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CameraArgs {
    /// `xyz`, `canon5d2`, or a CSV of channel sensitivities.
    #[arg(long, default_value = "xyz")]
    pub camera: String,
    /// Exposure multiplier on the sensitivities (default: unit white response).
    #[arg(long)]
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Munsell chip (`p0123` or `5YR 4/6`).
    #[arg(long, conflicts_with = "reflectance")]
    pub patch: Option<String>,
    /// CSV of a reflectance spectrum (first data column is used).
    #[arg(long)]
    pub reflectance: Option<PathBuf>,
    /// `d65`, `d50`, `planck:<K>` or a CSV spectrum.
    #[arg(long, default_value = "d65")]
    pub illuminant: String,
    /// Output facet CSV.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Also write a 16-bit PNG.
    #[arg(long)]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum DatasetCommand {
    /// Render patches × illuminants × angles and split by patch.
    Gen(DatasetGenArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    /// `munsell` or a CSV whose columns are reflectance spectra.
    #[arg(long, default_value = "munsell")]
    pub patches: String,
    /// Comma-separated list of `d65`, `d50`, `planck:<K>`,
    /// `planck:<min>:<max>:<step>` or CSV paths.
    #[arg(long, default_value = "planck:4000:15000:500")]
    pub illuminants: String,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Facets along each side of a panel.
    #[arg(long, default_value_t = 10)]
    pub facets: usize,
    /// Monte Carlo samples per facet pair.
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    /// Seed of the kernel estimator.
    #[arg(long, default_value_t = 0)]
    pub kernel_seed: u64,
    /// Fraction of patches in the training split.
    #[arg(long, default_value_t = 0.9)]
    pub train_fraction: f64,
    /// Seed of the patch split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Standardize each image by its own statistics.
    #[arg(long)]
    pub per_image_norm: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DatasetGenArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Cavity angles in degrees (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "45")]
    pub angle: Vec<f64>,
    /// Generation seed recorded in the manifest.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; `.train.ds` and `.test.ds` splits are written beside it.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial learning rate.
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 20)]
    pub decay_every: usize,
    #[arg(long, default_value_t = 0.1)]
    pub decay_factor: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
    /// Weight of the reflectance loss.
    #[arg(long, default_value_t = 1.0)]
    pub w_r: f64,
    /// Weight of the illuminant loss.
    #[arg(long, default_value_t = 1.0)]
    pub w_e: f64,
    /// Weight of the consistency loss.
    #[arg(long, default_value_t = 1.0)]
    pub w_s: f64,
    /// Train without the illuminant branch.
    #[arg(long)]
    pub no_spd_branch: bool,
    /// Train on clean renders.
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long, default_value_t = 32)]
    pub c1: usize,
    #[arg(long, default_value_t = 32)]
    pub c2: usize,
    #[arg(long, default_value_t = 128)]
    pub c3: usize,
    #[arg(long, default_value_t = 200)]
    pub hidden: usize,
    /// Average instead of max pooling.
    #[arg(long)]
    pub avg_pool: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Training split written by `dataset gen`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Test split for periodic evaluation.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Evaluate on the test split every N epochs.
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
    /// Write a checkpoint every N epochs.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Run directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset split to score.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    /// Facet CSV of panel A (`facet_row,facet_col,<channels>`).
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value = "d65")]
    pub illuminant: String,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[arg(long, default_value_t = 45.0)]
    pub angle: f64,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub kernel_seed: u64,
    /// Number of principal components.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Spectra the basis is built from: `munsell` or a CSV.
    #[arg(long, default_value = "munsell")]
    pub basis: String,
    #[arg(long, default_value_t = 20_000)]
    pub max_iterations: usize,
    /// Seeded restarts tried while the image is not fit exactly.
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    /// Output reflectance CSV; a JSON summary is written beside it.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AngleStudyArgs {
    /// Rows as `<train>[+<train>...]:<test>`, comma-separated.
    #[arg(long, default_value = "45:45,150:150")]
    pub rows: String,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetamerArgs {
    /// Munsell chip (`p0123` or `5YR 4/6`).
    #[arg(long, default_value = "5R 4/14")]
    pub patch: String,
    #[arg(long, default_value = "d65")]
    pub illuminant: String,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Directory holding run outputs.
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Report directory (default: `<run-dir>/report`).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}
