use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "catsdr",
    version,
    about = "Sufficient dimension reduction for categorical and ordinal labels"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Key-value file whose entries act as flags; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the five-cluster simulation (train, tune and test sets).
    Simulate(SimulateArgs),
    /// Estimate a basis with one method at a fixed bandwidth.
    Estimate(EstimateArgs),
    /// Select the bandwidth by k-means separation.
    Tune(TuneArgs),
    /// Estimate the structural dimension by predictor augmentation.
    Order(OrderArgs),
    /// Compare methods over seeded simulations.
    Bench(BenchArgs),
    /// Project a dataset with a saved basis.
    Project(ProjectArgs),
    /// Relabel and split a dataset into train and test files.
    Prepare(PrepareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Categorical,
    Ordinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Cg,
    Fisher,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,

    /// Name of the label column.
    #[arg(long, default_value = "label")]
    pub label: String,

    #[arg(long, value_enum, default_value = "categorical")]
    pub family: FamilyArg,

    /// Merge raw labels into classes, e.g. `3,4,5;6;7,8`.
    #[arg(long)]
    pub merge: Option<String>,

    /// Cut a numeric label into this many quantile classes.
    #[arg(long)]
    pub quantile_bins: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Refinement passes for OPCG.
    #[arg(long, default_value_t = 5)]
    pub refine: usize,

    #[arg(long, value_enum, default_value = "cg")]
    pub solver: SolverArg,

    /// Ridge on the local slopes.
    #[arg(long, default_value_t = 1e-2)]
    pub ridge: f64,

    /// Skip standardizing the predictors.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub raw: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Training observations per cluster.
    #[arg(long, default_value_t = 50)]
    pub per_cluster: usize,

    #[arg(long, default_value = "catsdr-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value = "opcg")]
    pub method: String,

    #[arg(long)]
    pub h: Option<f64>,

    #[arg(long)]
    pub d: usize,

    /// Ridge on the predictor covariance for SIR.
    #[arg(long, default_value_t = 0.0)]
    pub tikhonov: f64,

    #[command(flatten)]
    pub fit: FitArgs,

    #[arg(long, default_value = "catsdr-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Separate tuning set; required unless `--criterion kfold`.
    #[arg(long)]
    pub tune_input: Option<PathBuf>,

    #[arg(long, default_value = "kfold")]
    pub criterion: String,

    #[arg(long)]
    pub d: usize,

    /// `lo:hi:count` for a log-spaced grid, or a comma-separated list.
    #[arg(long, default_value = "0.3:10:20")]
    pub grid: String,

    /// Clusters per class, one value for all classes or one per class.
    #[arg(long, default_value = "2")]
    pub clusters_per_class: String,

    /// Total clusters for the unsupervised criterion (default: sum over classes).
    #[arg(long)]
    pub k_total: Option<usize>,

    #[arg(long, default_value_t = 3)]
    pub folds: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub fit: FitArgs,

    #[arg(long, default_value = "catsdr-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OrderArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub h: f64,

    /// Largest dimension considered (default: floor(p / ln p)).
    #[arg(long)]
    pub d_max: Option<usize>,

    /// Noise columns per replication (default: ceil(p / 5)).
    #[arg(long)]
    pub r: Option<usize>,

    #[arg(long, default_value_t = 200)]
    pub reps: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub fit: FitArgs,

    #[arg(long, default_value = "catsdr-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Number of seeds, starting at `--first-seed`.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,

    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,

    #[arg(long, default_value_t = 1.0)]
    pub h: f64,

    #[arg(long, default_value_t = 2)]
    pub d: usize,

    #[arg(long, default_value = "opcg,made,opg,pw_opcg,pl_opcg,sir")]
    pub methods: String,

    #[arg(long, default_value_t = 0.0)]
    pub tikhonov: f64,

    #[command(flatten)]
    pub fit: FitArgs,

    #[arg(long, default_value = "catsdr-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ProjectArgs {
    /// Basis file written by `estimate`.
    #[arg(long)]
    pub basis: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value = "catsdr-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub train_fraction: f64,

    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub stratified: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "catsdr-out")]
    pub out_dir: PathBuf,
}
