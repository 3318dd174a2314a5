//! Command-line front end tying the library together: dataset generation,
//! preprocessing selection, fitting, transforming, classifier training,
//! evaluation and benchmarking.
//!
//! Every command is deterministic given its inputs and seed, and every
//! artifact embeds the fully resolved configuration plus a format version.
//! Exit codes: 0 success, 2 usage/configuration error, 3 data error,
//! 4 numerical failure.

pub mod commands;
pub mod synth;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "dplm",
    version,
    about = "SPD-manifold dimensionality reduction, Riemannian classifiers and an EEG covariance pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a deterministic synthetic SPD dataset.
    Synth(commands::SynthArgs),
    /// Cross-validated selection of the preprocessing window and band.
    PreprocSelect(commands::PreprocArgs),
    /// Fit the dimensionality-reducing projection.
    Fit(commands::FitArgs),
    /// Project a dataset through a fitted model.
    Transform(commands::TransformArgs),
    /// Train an MDM or FGMDM classifier.
    Train(commands::TrainArgs),
    /// Evaluate a classifier: accuracy, kappa, confusion matrix.
    Eval(commands::EvalArgs),
    /// Time optimizer iterations over a size/dimension grid.
    Bench(commands::BenchArgs),
}

/// A failed run, carrying its process exit code.
#[derive(Debug)]
pub struct CliFailure {
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
}

impl CliFailure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            exit_code: 2,
            kind: "usage".into(),
            message: message.into(),
        }
    }

    /// The machine-readable error object printed to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "kind": self.kind,
                "message": self.message,
                "exit_code": self.exit_code,
            }
        })
    }
}

impl From<dplm::Error> for CliFailure {
    fn from(e: dplm::Error) -> Self {
        use dplm::Error::*;
        let (exit_code, kind) = match &e {
            InvalidConfig(_) | ClassTooSmall { .. } | InvalidBand(_) => (2, "config"),
            Io(_)
            | Json(_)
            | Parse(_)
            | Format(_)
            | EmptyInput(_)
            | DimensionMismatch { .. }
            | WindowOutOfRange { .. }
            | SignalTooShort { .. }
            | NonFiniteEntries => (3, "data"),
            NotSymmetric { .. }
            | NotPositiveDefinite { .. }
            | NotOrthonormal { .. }
            | MeanDidNotConverge { .. }
            | ProjectedSingular { .. }
            | RankDeficientCovariance => (4, "numerical"),
        };
        Self {
            exit_code,
            kind: kind.into(),
            message: e.to_string(),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliFailure> {
    match cli.command {
        Command::Synth(args) => commands::run_synth(args),
        Command::PreprocSelect(args) => commands::run_preproc_select(args),
        Command::Fit(args) => commands::run_fit(args),
        Command::Transform(args) => commands::run_transform(args),
        Command::Train(args) => commands::run_train(args),
        Command::Eval(args) => commands::run_eval(args),
        Command::Bench(args) => commands::run_bench(args),
    }
}
