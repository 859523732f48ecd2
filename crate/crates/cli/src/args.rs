use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use vrfam_core::models::ModelKind;
use vrfam_core::nn::Precision;
use vrfam_core::trajectory::Pin;
use vrfam_core::windowing::{CrossDeviceTest, Scenario};

#[derive(Debug, Parser)]
#[command(name = "vrfam", version, about = "VR familiarity classification from hand-motion trajectories")]
pub struct Cli {
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train and evaluate one cell.
    Train(TrainArgs),
    /// Re-evaluate a saved checkpoint.
    Eval(EvalArgs),
    /// Run a grid of cells and render the report.
    Sweep(SweepArgs),
    /// Render accuracy matrices and ROC files from sweep results.
    Report(ReportArgs),
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Parent directory of the per-run output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,

    /// Run directory name under --out (default: UTC timestamp + config hash).
    #[arg(long)]
    pub run_name: Option<String>,

    /// Key/value config file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Global seed (default: $VRFAM_SEED, else 0).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,

    /// Participants per class.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub per_class: Option<u64>,

    /// PINs to generate (default: all four).
    #[arg(long, value_delimiter = ',')]
    pub pins: Vec<Pin>,
}

/// Training settings shared by `train` and `sweep`.
#[derive(Debug, Clone, Default, Args)]
pub struct Hyper {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eval_batch_size: Option<usize>,
    /// Window stride (train and test).
    #[arg(long)]
    pub stride: Option<usize>,
    /// Test-window stride, if different from --stride.
    #[arg(long)]
    pub test_stride: Option<usize>,
    #[arg(long)]
    pub split_fraction: Option<f64>,
    /// Label smoothing factor.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// f64 or f32.
    #[arg(long)]
    pub precision: Option<Precision>,
    /// Cross-device test set: held_out or all_participants.
    #[arg(long)]
    pub cross_device_test: Option<CrossDeviceTest>,
    /// Train and test on random class-balanced labels (chance-level control).
    #[arg(long)]
    pub label_shuffle: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub hyper: Hyper,

    /// Dataset directory (or its frames CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// controller, hand, cross or mixed.
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub pin: Option<Pin>,
    /// mlp, fcn or inception.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Window length in frames.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Override the stored inference batch size.
    #[arg(long)]
    pub eval_batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub hyper: Hyper,

    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Vec<Scenario>,
    #[arg(long, value_delimiter = ',')]
    pub pins: Vec<Pin>,
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<ModelKind>,
    /// Window lengths; each must be one of 50, 60, ..., 120.
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<usize>,
    /// Seeds per cell (seed, seed + 1, ...).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,
    /// Shuffle the execution order with this seed.
    #[arg(long, hide = true)]
    pub schedule_seed: Option<u64>,
    /// Also render SVG plots.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,

    /// `results.json` from a sweep, or the sweep's run directory.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub svg: bool,
}
