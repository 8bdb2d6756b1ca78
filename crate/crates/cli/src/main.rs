mod commands;
mod run_manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use weld_anomaly::ErrorKind;

/// Unsupervised weld defect detection from audio and video embeddings.
#[derive(Debug, Parser)]
#[command(name = "weldad", version, about)]
pub struct Cli {
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by commands that run an experiment. Flags override values
/// from the config file, which override built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Experiment TOML file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (WAVs, embedding files, manifest).
    Synth(commands::SynthArgs),
    /// Train the audio autoencoder on the good welds of the training split.
    TrainAudio(commands::TrainArgs),
    /// Train the video autoencoder on the good welds of the training split.
    TrainVideo(commands::TrainArgs),
    /// Score a manifest split (or a single WAV) with a trained checkpoint.
    Score(commands::ScoreArgs),
    /// Pick the fusion weight on validation scores and apply it to test.
    Fuse(commands::FuseArgs),
    /// Per-category AUC tables, EER and ROC/DET plots for score files.
    Eval(commands::EvalArgs),
    /// Replay a WAV through the streaming scorer.
    Stream(commands::StreamArgs),
    /// Sweep FFT window and bottleneck for the audio model.
    Grid(commands::GridArgs),
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
        ErrorKind::Io => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("WELDAD_LOG")
        .format_timestamp(None)
        .init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // the message already embeds any underlying cause
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
