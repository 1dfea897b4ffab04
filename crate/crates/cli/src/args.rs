use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pilae::layer::{Activation, WidthRule};
use pilae::readout::HeadKind;

#[derive(Debug, Parser)]
#[command(name = "pilae", version, about = "Pseudoinverse-trained stacked autoencoders")]
#[command(args_override_self = true)]
pub struct Cli {
    /// key=value file whose entries act as defaults for the command's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root directory for named datasets.
    #[arg(long, global = true, env = "PILAE_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,

    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grow a stack, fit a readout head and write the model.
    Train(TrainArgs),
    /// Score a saved model.
    Eval(EvalArgs),
    /// Compare against the backprop baseline and probe time scaling.
    Bench(BenchArgs),
    /// Fit the last-width regression from a records file.
    FitWidth(FitWidthArgs),
    /// Reconstruction error across width-rule parameters.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Idx,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "idx")]
    pub data_format: DataFormat,

    /// IDX: a directory holding train-*/t10k-* files, or a dataset name under
    /// the data directory. CSV: a file.
    #[arg(long)]
    pub train: String,

    /// Test data. IDX defaults to the t10k files beside the training files;
    /// CSV defaults to one held-out fold of the training file.
    #[arg(long)]
    pub test: Option<String>,

    /// CSV label column: index, header name, or "last".
    #[arg(long, default_value = "last")]
    pub label_column: String,

    #[arg(long)]
    pub no_header: bool,

    /// Use only the first N training samples.
    #[arg(long)]
    pub limit: Option<usize>,

    /// Use only the first N test samples.
    #[arg(long)]
    pub test_limit: Option<usize>,

    /// Fold count for the CSV hold-out split.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// blend:<alpha> or decay:<beta>.
    #[arg(long, default_value = "blend:0.5")]
    pub width_rule: WidthRule,

    #[arg(long, default_value = "sigmoid")]
    pub activation: Activation,

    #[arg(long, default_value_t = 1e-6)]
    pub lambda1: f64,

    #[arg(long)]
    pub no_tie: bool,

    #[arg(long)]
    pub bias: bool,

    #[arg(long, default_value_t = 0.9)]
    pub fallback_beta: f64,

    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,

    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,

    #[arg(long, default_value_t = 8)]
    pub min_width: usize,

    #[arg(long, default_value = "shln")]
    pub head: HeadKind,

    /// "auto" or a positive value.
    #[arg(long, default_value = "auto")]
    pub lambda: String,

    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,

    #[arg(long, default_value_t = 0.1)]
    pub softmax_step: f64,

    #[arg(long, default_value_t = 500)]
    pub softmax_epochs: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, default_value = "model.pilae")]
    pub out: PathBuf,

    /// JSON-lines report; defaults to the model path with `.jsonl` appended.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,

    /// Score the training split instead of the test split.
    #[arg(long)]
    pub on_train: bool,

    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, default_value_t = 20)]
    pub epochs: usize,

    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,

    #[arg(long)]
    pub skip_baseline: bool,

    /// Comma-separated sample counts for the scaling probe.
    #[arg(long, value_delimiter = ',')]
    pub scaling: Vec<usize>,

    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitWidthArgs {
    /// CSV with header r,n,p_star and an optional d column.
    pub records: PathBuf,

    #[arg(long, default_value_t = 0.5)]
    pub alpha_fallback: f64,

    /// Multiplier applied to each record's N before fitting, for records that
    /// list full data-set sizes while the widths were tuned on training folds.
    #[arg(long, default_value_t = 1.0)]
    pub n_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepTarget {
    Alpha,
    Beta,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, value_enum, default_value = "alpha")]
    pub param: SweepTarget,

    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub values: Vec<f64>,
}
