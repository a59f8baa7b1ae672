//! `reqsense` — the command-line pipeline around [`reqsense_core`]:
//! synthetic dataset generation, spectrogram feature extraction, two-phase
//! requirement-driven training, and evaluation/ROC/sweep export.
//!
//! Exit codes: 0 success; 1 training finished but the requirements are
//! unmet or the model is dead; 2 usage or configuration error; 3 I/O or
//! data-format error.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reqsense_core::Error;

use commands::{
    EvalArgs, FeaturesArgs, GenSignalsArgs, GenToyArgs, RocArgs, SweepArgs, TrainArgs,
};

#[derive(Parser)]
#[command(
    name = "reqsense",
    version,
    about = "Train and evaluate classifiers directly against TP/FP requirements",
    long_about = "Generates skewed synthetic sensing datasets, extracts normalized \
                  spectrogram features, trains a gated product model against explicit \
                  true-positive/false-positive requirements, and exports evaluation \
                  summaries, ROC curves, and class-weight sweeps. Every command is \
                  deterministic given its seed and writes a reproduction manifest \
                  next to its primary output."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic signal dataset (motion, easy noise, spurious bursts)
    GenSignals(GenSignalsArgs),
    /// Generate the 2D two-Gaussian toy dataset
    GenToy(GenToyArgs),
    /// Extract normalized spectrogram features from a signal dataset
    Features(FeaturesArgs),
    /// Train the gated product model against TP/FP requirements
    Train(TrainArgs),
    /// Evaluate a saved model at a hard decision threshold
    Eval(EvalArgs),
    /// Export the ROC curve of a saved model over a feature set
    Roc(RocArgs),
    /// Fit class-weighted toy models and export their ROC curves
    Sweep(SweepArgs),
}

fn main() -> ExitCode {
    ExitCode::from(run())
}

fn run() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests arrive here too; only real usage
            // errors exit nonzero.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenSignals(a) => commands::gen_signals(a),
        Command::GenToy(a) => commands::gen_toy(a),
        Command::Features(a) => commands::features(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Roc(a) => commands::roc(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => 2,
                Error::Shape { .. } | Error::Parse { .. } | Error::Io(_) => 3,
            }
        }
    }
}
