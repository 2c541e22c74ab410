use std::path::PathBuf;

use amc_core::losses::LossKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "amc",
    version,
    about = "Adapted margin cosine losses: statistics, training, evaluation and checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer statistics and adapted margins for VQA-CP style annotations.
    Stats(StatsArgs),
    /// Generate a synthetic prior-shift dataset.
    Synth(SynthArgs),
    /// Train a classifier head on a stored dataset.
    Train(TrainArgs),
    /// Score a checkpoint with the soft VQA accuracy.
    Eval(EvalArgs),
    /// Compare ce, nsl, fixed margins and adapted margins over several seeds.
    Sweep(SweepArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Lower bounds on the scale s for a target probability.
    Scalebound(ScaleboundArgs),
    /// Write unit feature vectors, cosines and class directions as CSV.
    ExportEmbeddings(ExportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Stats(_) => "stats",
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Gradcheck(_) => "gradcheck",
            Command::Scalebound(_) => "scalebound",
            Command::ExportEmbeddings(_) => "export-embeddings",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossArg {
    Ce,
    Nsl,
    Lmc,
    Adavqa,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Ce => LossKind::Ce,
            LossArg::Nsl => LossKind::Nsl,
            LossArg::Lmc => LossKind::Lmc,
            LossArg::Adavqa => LossKind::Adavqa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Questions JSON array (question_id, ...).
    #[arg(long)]
    pub questions: PathBuf,
    /// Annotations JSON array (question_id, question_type, answers).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Drop answers given by fewer annotators than this in total (0 or 1 keeps all).
    #[arg(long, default_value_t = 0)]
    pub min_count: u64,
    /// Smoothing constant for the normalized frequencies.
    #[arg(long, default_value_t = amc_core::margin::DEFAULT_EPSILON)]
    pub epsilon: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Preset name: default, mild or severe.
    #[arg(long, default_value = "default")]
    pub preset: String,
    /// Generator seed (defaults to the preset's seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of training records.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Override the number of test records.
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Override the evidence noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Loss selection shared by train and sweep-like commands.
#[derive(Debug, Args, Serialize)]
pub struct LossArgs {
    /// Loss function.
    #[arg(long, value_enum)]
    pub loss: LossArg,
    /// Scale s for the normalized losses [default: 16]. Not accepted with ce.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Fixed margin in [0, 1]; required by lmc and rejected otherwise.
    #[arg(long)]
    pub fixed_margin: Option<f64>,
    /// Entropy threshold in bits below which adavqa uses zero margins [default: 1.0]; adavqa only.
    #[arg(long)]
    pub entropy_threshold: Option<f64>,
    /// Smoothing constant for the margin table; adavqa only [default: 1e-6].
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimArgs {
    /// SGD learning rate.
    #[arg(long, default_value_t = amc_core::trainer::DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    /// Training epochs.
    #[arg(long, default_value_t = amc_core::trainer::DEFAULT_EPOCHS)]
    pub epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = amc_core::trainer::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Width of an optional tanh hidden layer before the head.
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Seed for initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split to score.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    /// Comma-separated fixed margins for the lmc rows.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    pub fixed_margins: Vec<f64>,
    /// Scale s for the normalized losses.
    #[arg(long, default_value_t = amc_core::losses::DEFAULT_SCALE)]
    pub scale: f64,
    /// Entropy threshold in bits for adavqa.
    #[arg(long, default_value_t = amc_core::margin::DEFAULT_ENTROPY_THRESHOLD)]
    pub entropy_threshold: f64,
    /// Smoothing constant for the margin table.
    #[arg(long, default_value_t = amc_core::margin::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Comma-separated loss kinds to check [default: all].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub kind: Vec<LossArg>,
    /// Random instances per kind and dimension pair.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Seed for the random instances.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated FEATURESxCLASSES pairs.
    #[arg(long, value_delimiter = ',', default_value = "4x3,64x50")]
    pub dims: Vec<String>,
    /// Maximum accepted relative error; exceeding it exits with status 1.
    #[arg(long, default_value_t = amc_core::trainer::DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Also check through a tanh hidden layer of this width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Scale s for the normalized losses.
    #[arg(long, default_value_t = amc_core::losses::DEFAULT_SCALE)]
    pub scale: f64,
    /// Optional output directory for the report and run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScaleboundArgs {
    /// Comma-separated margins m_j, one per class.
    #[arg(long, value_delimiter = ',', required = true)]
    pub margins: Vec<f64>,
    /// Index of the target class.
    #[arg(long)]
    pub target: usize,
    /// Target posterior probability in (0, 1).
    #[arg(long)]
    pub p: f64,
    /// Optional output directory for the report and run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split to export.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
