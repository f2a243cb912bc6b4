//! dropflow command line: generate data, prepare datasets, train the three
//! subnets, simulate scenes, reconstruct single drops, and evaluate rollouts.
//!
//! Exit codes: 0 success, 2 configuration, 3 data, 4 training, 5 scene.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "dropflow",
    version,
    about = "Learned contact-front simulation of small liquid drops"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural drop sequences with ground truth.
    Synth(SynthArgs),
    /// Convert frame sequences into a training dataset.
    Prep(PrepArgs),
    /// Train one of the three prediction subnets.
    Train(TrainArgs),
    /// Run a scene forward and write trajectories and meshes.
    Simulate(SimulateArgs),
    /// Reconstruct one drop surface from contour plus gradient data.
    Reconstruct(ReconstructArgs),
    /// Roll a trained model from a held-out sequence and score it.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Generator parameter JSON (defaults apply for missing fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for sequences and the manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PrepArgs {
    /// Directory of frame_%06d.pgm files (one sequence).
    #[arg(long, conflicts_with = "manifest")]
    frames: Option<PathBuf>,
    /// Manifest JSON produced by synth (many sequences).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// History window length K.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Output dataset path (JSON lines); an init database is written next
    /// to it with extension .initdb.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Which subnet to train.
    #[arg(long, value_parser = ["contour", "gradient", "breakage"])]
    net: String,
    /// Dataset file from prep.
    #[arg(long)]
    dataset: PathBuf,
    /// Training epochs.
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Initial learning rate.
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Learning-rate decay per optimizer step.
    #[arg(long, default_value_t = 1e-6)]
    decay: f64,
    /// Optimizer: sgd (Nesterov momentum 0.9) or adam.
    #[arg(long, default_value = "sgd", value_parser = ["sgd", "adam"])]
    optimizer: String,
    /// Weight init and shuffle seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop early once the epoch loss drops below this value.
    #[arg(long)]
    target_loss: Option<f64>,
    /// Output model path; the loss curve is written next to it as .loss.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene configuration JSON.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory (trajectory.csv plus per-step OBJ meshes).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Contour file ("contour v1").
    #[arg(long)]
    contour: PathBuf,
    /// Gradient profile file ("gradient v1").
    #[arg(long)]
    gradient: PathBuf,
    /// Drop volume in scene units cubed.
    #[arg(long)]
    volume: f64,
    /// Output OBJ path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Scene configuration JSON (models, terrain, K).
    #[arg(long)]
    scene: PathBuf,
    /// Ground-truth tracks JSON ("nd-truth v1").
    #[arg(long)]
    truth: PathBuf,
    /// Sequence index within the truth file to evaluate.
    #[arg(long, default_value_t = 0)]
    seq: usize,
    /// Rollout length (capped by the sequence length).
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Init database; defaults to the other sequences in the truth file.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth(&args),
        Command::Prep(args) => commands::prep(&args),
        Command::Train(args) => commands::train(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Reconstruct(args) => commands::reconstruct(&args),
        Command::Eval(args) => commands::eval(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

/// Error with its process exit code.
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }

    fn training(message: impl Into<String>) -> Self {
        CliError {
            code: 4,
            message: message.into(),
        }
    }

    fn scene(message: impl Into<String>) -> Self {
        CliError {
            code: 5,
            message: message.into(),
        }
    }
}
