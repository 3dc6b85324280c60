use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qscorer_core::analysis::UatTarget;
use qscorer_core::data::Generator;
use qscorer_core::pipeline::{FidelityVariant, Fusion, HeadKind, RegressorKind};
use serde::{Deserialize, Serialize};

use crate::config::kebab;

#[derive(Debug, Parser)]
#[command(
    name = "qscorer",
    version,
    about = "Score-token IQA toolkit: error studies, soft labels, toy training"
)]
pub struct Cli {
    /// JSON file of option values (or a previous run's manifest.json); flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label-conversion error studies (JSON-lines report plus CSV curves).
    AnalyzeErrors(AnalyzeArgs),
    /// Raw and enhanced soft labels for one Gaussian rating.
    Softlabel(SoftlabelArgs),
    /// Train a model; writes checkpoint, held-out report and loss trace.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Train every requested head on the same split and tabulate the results.
    Compare(CompareArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::AnalyzeErrors(_) => "analyze-errors",
            Command::Softlabel(_) => "softlabel",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Compare(_) => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Qalign,
    Deqa,
    Uat,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPart {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OutArgs {
    /// Directory for all artifacts of the run.
    #[arg(long, default_value = "qscorer-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// qalign | deqa | uat | all
    #[arg(long, value_parser = kebab::<Method>)]
    pub method: Option<Method>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte-Carlo samples for the Q-Align study.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    /// Score distribution mean (truncated normal on [1,5]); uniform when unset.
    #[arg(long, requires = "score_sigma")]
    pub score_mu: Option<f64>,
    #[arg(long, requires = "score_mu")]
    pub score_sigma: Option<f64>,
    /// Single rating mean for the DeQA studies; the grid is used when unset.
    #[arg(long, requires = "sigma")]
    pub mu: Option<f64>,
    #[arg(long, requires = "mu")]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 17)]
    pub grid_mus: usize,
    #[arg(long, default_value_t = 8)]
    pub grid_sigmas: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma_hi: f64,
    /// Grid points for the max |h''| estimate of the midpoint bound.
    #[arg(long, default_value_t = 10_000)]
    pub bound_grid: usize,
    /// Sigmas of the restoration study (at --restore-mu).
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.25, 0.5, 1.0])]
    pub restore_sigmas: Vec<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub restore_mu: f64,
    /// affine | sine-warped | constant
    #[arg(long, value_parser = kebab::<UatTarget>, default_value = "sine-warped")]
    pub uat_target: UatTarget,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 16, 64])]
    pub uat_widths: Vec<usize>,
    #[arg(long, default_value_t = 300)]
    pub uat_epochs: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SoftlabelArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Synthetic generator: linear | nonlinear-smooth | multimodal (default linear without --data).
    #[arg(long, value_parser = kebab::<Generator>, conflicts_with = "data")]
    pub synth: Option<Generator>,
    /// CSV dataset with header id,mos[,std][,f0..fk].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Native MOS range of --data as lo,hi; rescaled to [1,5].
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1.0, 5.0])]
    pub mos_range: Vec<f64>,
    /// Synthetic sample count.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    /// Seed for data generation, split, initialization and batching.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    pub hidden_dim: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [64usize])]
    pub encoder_hidden: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 16])]
    pub head_hidden: Vec<usize>,
    /// additive | concat
    #[arg(long, value_parser = kebab::<Fusion>, default_value = "additive")]
    pub fusion: Fusion,
    /// mlp | hyper
    #[arg(long, value_parser = kebab::<RegressorKind>, default_value = "mlp")]
    pub regressor: RegressorKind,
    #[arg(long)]
    pub single_token: bool,
    #[arg(long)]
    pub predict_sigma: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    /// cosine | constant
    #[arg(long, value_parser = kebab::<Schedule>, default_value = "cosine")]
    pub lr_schedule: Schedule,
    /// Loss weights; unset ones keep the head's defaults.
    #[arg(long)]
    pub w_ce: Option<f64>,
    #[arg(long)]
    pub w_score: Option<f64>,
    #[arg(long)]
    pub w_kl: Option<f64>,
    #[arg(long)]
    pub w_fidelity: Option<f64>,
    #[arg(long)]
    pub w_norm_in_norm: Option<f64>,
    #[arg(long)]
    pub w_ranking: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub ranking_margin: f64,
    /// token-spread | sigma-head
    #[arg(long, value_parser = kebab::<FidelityVariant>, default_value = "token-spread")]
    pub fidelity_variant: FidelityVariant,
    /// Select the regression embedding by the predicted token during training.
    #[arg(long)]
    pub no_teacher_forcing: bool,
    /// Sigma for samples without an annotated std.
    #[arg(long)]
    pub fallback_sigma: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// qscorer | qalign | deqa | linear
    #[arg(long, value_parser = kebab::<HeadKind>, default_value = "qscorer")]
    pub head: HeadKind,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// train | test | all
    #[arg(long, value_parser = kebab::<SplitPart>, default_value = "test")]
    pub split: SplitPart,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(long, value_delimiter = ',', value_parser = kebab::<HeadKind>,
          default_values = ["qscorer", "qalign", "deqa", "linear"])]
    pub heads: Vec<HeadKind>,
    /// PLCC threshold for the epochs-to-threshold column.
    #[arg(long, default_value_t = 0.9)]
    pub plcc_threshold: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}
