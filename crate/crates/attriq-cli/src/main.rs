//! `attriq`: generate corpora, train the built-in models, attribute their
//! predictions and run the overstability test and attacks.

mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "attriq", version, about = "Attribution and robustness analysis for small QA models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    config: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Gen,
    /// Train a model on a corpus.
    Train,
    /// Accuracy of a model on a corpus.
    Eval,
    /// Integrated Gradients reports for every instance.
    Attribute,
    /// Accuracy against the size of a top-attributed vocabulary.
    Overstability,
    /// Run an attack (concat, stopword, subject or reorder).
    Attack,
    /// Group tables by the program chosen for an empty question.
    DefaultPrograms,
    /// Top-attributed tokens per selected operator.
    Triggers,
    /// Attack failure rates split by high-attribution nouns and adjectives.
    Efficacy,
    /// Render reports as HTML, ANSI text or alignment matrices.
    Render,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Attribute => "attribute",
            Command::Overstability => "overstability",
            Command::Attack => "attack",
            Command::DefaultPrograms => "default-programs",
            Command::Triggers => "triggers",
            Command::Efficacy => "efficacy",
            Command::Render => "render",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.config.resolve()?;
    if let Some(jobs) = cfg.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set up {jobs} workers: {e}")))?;
    }
    commands::run(cli.command, &cfg)
}
