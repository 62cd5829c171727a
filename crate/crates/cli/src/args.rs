use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mincseg::densecrf::{CrfParams, FilterBackend};
use mincseg::eval::Objective;

#[derive(Debug, Parser)]
#[command(name = "mincseg", version, about = "Full-scene material segmentation")]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Root that relative dataset paths are resolved against when they do
    /// not exist as given.
    #[arg(long, global = true, env = "MINCSEG_DATA_DIR")]
    pub data_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one image: dense CNN prediction, fusion, CRF.
    Segment(SegmentArgs),
    /// Score predicted label maps against click and segment annotations.
    Evaluate(EvaluateArgs),
    /// Search CRF parameters on a validation set.
    GridSearch(GridSearchArgs),
    /// Turn annotations into patch records with split labels.
    ExtractPatches(ExtractArgs),
    /// Pick evaluation photos that cover the categories well.
    SelectEval(SelectArgs),
    /// Render the category color legend.
    Legend(LegendArgs),
    /// Write a small randomly initialised network for trying the pipeline.
    ToyNet(ToyNetArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Exact,
    Lattice,
}

impl From<Backend> for FilterBackend {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Exact => FilterBackend::Exact,
            Backend::Lattice => FilterBackend::Lattice,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CrfArgs {
    /// Mean-field iterations.
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = Backend::Lattice)]
    pub backend: Backend,
    /// Potts weight; 0 disables smoothing.
    #[arg(long, default_value_t = 2.0)]
    pub wp: f64,
    /// Position bandwidth as a fraction of the smaller image side.
    #[arg(long, default_value_t = 0.1)]
    pub theta_p: f64,
    #[arg(long, default_value_t = 10.0)]
    pub theta_l: f64,
    #[arg(long, default_value_t = 5.0)]
    pub theta_ab: f64,
}

impl CrfArgs {
    pub fn params(&self) -> CrfParams {
        CrfParams {
            theta_p: self.theta_p,
            theta_l: self.theta_l,
            theta_ab: self.theta_ab,
            w_p: self.wp,
            iterations: self.iters,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Network description (JSON).
    #[arg(long)]
    pub net: Option<PathBuf>,
    /// Network weights (binary blob).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Patch scale the network was trained at.
    #[arg(long, default_value_t = 0.233)]
    pub scale: f64,
    /// Also evaluate at half-stride offsets.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub half_stride: bool,
    /// Number of image scales (1-3).
    #[arg(long, default_value_t = 3)]
    pub scales: usize,
    /// Smaller side of the fused map and CRF grid.
    #[arg(long, default_value_t = mincseg::multiscale::FUSION_DIM)]
    pub fusion_dim: usize,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub crf: CrfArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Annotation file (line-delimited JSON).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory of label index PNGs, `<photo>.png` or `<photo>/index.png`.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Segment,
    Click,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Segment => Objective::SegmentClassAcc,
            ObjectiveArg::Click => Objective::ClickClassAcc,
        }
    }
}

#[derive(Debug, Args)]
pub struct GridSearchArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory of photos, `<photo>.png` or `<photo>.ppm`.
    #[arg(long)]
    pub images: PathBuf,
    /// Precomputed probability maps, `<photo>.pmap` or
    /// `<photo>/probabilities.pmap`; used instead of running a network.
    #[arg(long)]
    pub pmaps: Option<PathBuf>,
    #[command(flatten)]
    pub net: NetArgs,
    /// Parameter grid (JSON); the built-in 135-point grid by default.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Segment)]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = Backend::Lattice)]
    pub backend: Backend,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output patch records (line-delimited JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Patch side as a fraction of the smaller image side.
    #[arg(long, default_value_t = mincseg::dataset::DEFAULT_PATCH_SCALE)]
    pub scale: f64,
    /// Minimum center spacing as a fraction of the smaller image side.
    #[arg(long, default_value_t = mincseg::dataset::MIN_SEPARATION)]
    pub min_separation: f64,
    /// Train, validate and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = mincseg::dataset::DEFAULT_RATIOS)]
    pub ratios: Vec<f64>,
    /// Segments of each category required in the test split.
    #[arg(long, default_value_t = mincseg::dataset::MIN_TEST_SEGMENTS)]
    pub min_test: usize,
    /// Photo directory; with --patch-dir, crops are written as PNGs.
    #[arg(long, requires = "patch_dir")]
    pub images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    pub patch_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Number of photos to pick.
    #[arg(long)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct LegendArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyNetArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = mincseg::dataset::NUM_CATEGORIES)]
    pub labels: usize,
}
