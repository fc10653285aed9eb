//! `msmp`: generate data, train, evaluate and plot message-passing PDE surrogates.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msmp_core::model::ModelKind;
use msmp_core::{Experiment, Split};

#[derive(Debug, Parser)]
#[command(name = "msmp", version, about = "Multi-scale message passing PDE solver toolkit")]
pub struct Cli {
    /// Worker threads for data generation and batch gradients [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the reference PDE and write train/valid/test trajectory files
    Generate(GenerateArgs),
    /// Train one model and write its best checkpoint plus a metrics log
    Train(TrainArgs),
    /// Roll a checkpoint out over a dataset split and report the relative L2 error
    Evaluate(EvaluateArgs),
    /// Write space-time heatmaps of one rollout
    Plot(PlotArgs),
    /// Compare reverse-mode gradients with central finite differences
    GradCheck(GradCheckArgs),
    /// Train every (experiment, model, fold) and tabulate test errors
    RunMatrix(RunMatrixArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args)]
pub struct DataSizeArgs {
    /// Training trajectories [default: 2048, ms-wave 1024]
    #[arg(long = "train")]
    pub n_train: Option<usize>,
    /// Validation trajectories [default: 128]
    #[arg(long = "valid")]
    pub n_valid: Option<usize>,
    /// Test trajectories [default: 128]
    #[arg(long = "test")]
    pub n_test: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// e1, e2 or ms-wave [default: e1]
    #[arg(long)]
    pub experiment: Option<Experiment>,
    /// Master seed of the sample streams [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub sizes: DataSizeArgs,
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: data]
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelSizeArgs {
    /// Hidden width [default: 128]
    #[arg(long)]
    pub n_hid: Option<usize>,
    /// Processor layers [default: 6]
    #[arg(long)]
    pub n_layers: Option<usize>,
    /// Steps per input/output window K [default: 25]
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    /// Training epochs [default: 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per optimizer step [default: 16]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate [default: 1e-4]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning-rate factor applied every `decay_every` epochs [default: 0.4]
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// Epochs between learning-rate decays [default: 5]
    #[arg(long)]
    pub decay_every: Option<usize>,
    /// Maximum pushforward unroll depth [default: 2]
    #[arg(long)]
    pub max_unroll: Option<usize>,
    /// AdamW decoupled weight decay [default: 1e-8]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Training samples per trajectory and epoch [default: windows per trajectory − 1]
    #[arg(long)]
    pub samples_per_trajectory: Option<usize>,
    /// Arithmetic precision of training [default: f32]
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// e1, e2 or ms-wave [default: e1]
    #[arg(long)]
    pub experiment: Option<Experiment>,
    /// mp-pde, lstm, lem, gated, lstmgated or msmp-pde [default: msmp-pde]
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Seed for initialization and sample order [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding the generated trajectory files
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    /// Output directory for the checkpoint and log
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[command(flatten)]
    pub size: ModelSizeArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding the generated trajectory files
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    /// Split to evaluate [default: test]
    #[arg(long, value_parser = parse_split, default_value = "test")]
    pub split: Split,
    /// Experiment of the data [default: inferred from the checkpoint]
    #[arg(long)]
    pub experiment: Option<Experiment>,
    /// Output directory for the result CSV
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub experiment: Option<Experiment>,
    /// Trajectory index within the split
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value = "plots")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Model variant [default: msmp-pde]
    #[arg(long, default_value = "msmp-pde")]
    pub model: ModelKind,
    /// Experiment determining channels and parameters [default: ms-wave]
    #[arg(long, default_value = "ms-wave")]
    pub experiment: Experiment,
    /// Use the tiny profile (12 nodes, K 4, n_hid 8, 2 layers) instead of the full model
    #[arg(long)]
    pub tiny: bool,
    /// Sampled coordinates per weight tensor (biases are checked fully)
    #[arg(long, default_value_t = 64)]
    pub per_tensor: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Failure threshold on the maximum relative error
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct RunMatrixArgs {
    /// Comma-separated experiments [default: e1,e2,ms-wave]
    #[arg(long, value_delimiter = ',')]
    pub experiments: Option<Vec<Experiment>>,
    /// Comma-separated models [default: all six]
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    /// Folds per cell; fold f reseeds training and regenerates train/valid with data seed + f
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Base seed of training and of the data splits [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory with trajectory files; missing experiments are generated there
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[command(flatten)]
    pub sizes: DataSizeArgs,
    #[command(flatten)]
    pub size: ModelSizeArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::ALL
        .into_iter()
        .find(|sp| sp.name() == s)
        .ok_or_else(|| format!("unknown split '{s}' (expected train, valid or test)"))
}

/// Failure category mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<msmp_core::Error> for CliError {
    fn from(e: msmp_core::Error) -> Self {
        match e {
            msmp_core::Error::Config(_) | msmp_core::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
