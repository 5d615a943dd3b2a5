use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pennet::nn::ExpMode;
use serde::{Deserialize, Serialize};

/// Handwritten letter recognition from digital pen recordings.
#[derive(Debug, Parser)]
#[command(name = "pennet", version)]
pub struct Cli {
    /// Seed for data generation, splitting, initialisation and shuffling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory receiving every output file; it must already exist.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Floating point type used for training and inference.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with manifest and calibration file.
    Synth(SynthArgs),
    /// Split, preprocess and train; writes metrics, checkpoints and a run manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on every sample of a manifest.
    Eval(EvalArgs),
    /// Print the most likely letters for a single recording.
    Predict(PredictArgs),
    /// Finite-difference check of the network's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub writers: u64,
    /// Samples of every letter per writer.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub per_class: u64,
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u64).range(1..))]
    pub channels: u64,
    /// Nominal recording length; actual lengths vary by ±25%.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..))]
    pub length: u64,
    /// Disable additive sensor noise.
    #[arg(long)]
    pub no_noise: bool,
}

#[derive(Clone, Debug, Args)]
pub struct PreprocArgs {
    /// Calibration CSV (`channel,bias,scale`).
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Channels fed to the model, in order [default: all but mx,my,mz].
    #[arg(long, value_delimiter = ',')]
    pub keep_channels: Option<Vec<String>>,
    /// Channels converted from degrees to radians [default: gx,gy,gz].
    #[arg(long, value_delimiter = ',')]
    pub gyro_channels: Option<Vec<String>>,
    #[arg(long, default_value_t = 256)]
    pub target_length: usize,
    /// Apply signed-log scaling after resampling.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub apply_log: bool,
}

#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    /// Mapping used by the exponential layer.
    #[arg(long, default_value = "signed")]
    pub exp_mode: ExpMode,
    #[arg(long, default_value_t = 256)]
    pub lstm_hidden: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Replay a saved run manifest instead of reading configuration flags.
    #[arg(long, conflicts_with = "manifest")]
    pub run_manifest: Option<PathBuf>,
    /// Dataset manifest (`sample_path,label,writer_id`).
    #[arg(long, required_unless_present = "run_manifest")]
    pub manifest: Option<PathBuf>,
    /// Share of writers used for training; 1.0 trains on everything.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[command(flatten)]
    pub preproc: PreprocArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub checkpoint_every: usize,
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// Epoch whose weights are written as final.ckpt [default: last].
    #[arg(long)]
    pub final_epoch: Option<usize>,
    #[arg(long, default_value_t = 3e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub weight_decay: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub preproc: PreprocArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sample CSV with a header of channel names.
    #[arg(long)]
    pub sample: PathBuf,
    #[command(flatten)]
    pub preproc: PreprocArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of letters listed.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=52))]
    pub top: u64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Input channels and hidden width of the reduced network.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..=4))]
    pub scale: u64,
    #[arg(long, default_value_t = 32)]
    pub length: usize,
    /// Central difference step.
    #[arg(long, default_value_t = pennet::gradcheck::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = pennet::gradcheck::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Break the backward rule of one operation kind (negative control).
    #[arg(long, hide = true)]
    pub corrupt_backward: Option<pennet::autodiff::OpKind>,
}
