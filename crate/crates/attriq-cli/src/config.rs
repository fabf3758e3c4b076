//! Run configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use attriq::datasets::GenConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PositionArg {
    Prefix,
    Suffix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Shuffle,
    AnswerFirst,
    AnswerLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureArg {
    LeftRiemann,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RenderFormat {
    Html,
    Ansi,
    Alignment,
}

/// Every knob of every subcommand. Flags that a subcommand does not use
/// are ignored by it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    /// TOML file with any of these settings; flags take precedence.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Seed; falls back to the config file, then ATTRIQ_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub jobs: Option<usize>,

    /// Dataset file (.jsonl, or .csv with table files).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Model checkpoint, or `fixture:planted`, `fixture:medal-prev`,
    /// `fixture:color`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Attribution reports (JSON lines) from a previous `attribute` run.
    #[arg(long, global = true)]
    pub reports: Option<PathBuf>,

    /// `table` or `classifier` for `gen`; `concat`, `stopword`, `subject`
    /// or `reorder` for `attack`.
    #[arg(long, global = true)]
    pub kind: Option<String>,
    /// Classifier corpus size for `gen`.
    #[arg(long, global = true)]
    pub size: Option<usize>,
    /// Table generator settings (config file only).
    #[arg(skip)]
    pub generator: Option<GenConfig>,

    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,

    /// Quadrature nodes for Integrated Gradients.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub quadrature: Option<QuadratureArg>,

    /// Vocabulary sizes, e.g. `0,1,2,5,10,all`.
    #[arg(long, global = true)]
    pub sizes: Option<String>,
    /// Tokens taken from each report when ranking the vocabulary.
    #[arg(long, global = true)]
    pub top_k: Option<usize>,

    /// Attack phrase; repeat for several (default: the shipped list).
    #[arg(long, global = true)]
    pub phrase: Option<Vec<String>>,
    #[arg(long, global = true, value_enum)]
    pub position: Option<PositionArg>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Word list files overriding the shipped ones.
    #[arg(long, global = true)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    pub nouns: Option<PathBuf>,
    #[arg(long, global = true)]
    pub order_words: Option<PathBuf>,

    /// Efficacy records (JSON lines).
    #[arg(long, global = true)]
    pub records: Option<PathBuf>,
    /// High-attribution fraction of the per-question maximum.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Compare signed scalars instead of magnitudes.
    #[arg(long, global = true)]
    pub signed: Option<bool>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<RenderFormat>,
}

macro_rules! layer {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    /// Flags over the config file over `ATTRIQ_SEED`.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(path) = self.config.clone() {
            let file = Self::from_file(&path)?;
            layer!(self, file; seed, data, model, reports, kind, size, generator, dim, lr, epochs, batch,
                steps, quadrature, sizes, top_k, phrase, position, mode, stopwords, nouns,
                order_words, records, threshold, signed, format);
        }
        if self.seed.is_none() {
            if let Ok(s) = std::env::var("ATTRIQ_SEED") {
                let seed = s
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("ATTRIQ_SEED must be an integer, got {s:?}")))?;
                self.seed = Some(seed);
            }
        }
        Ok(self)
    }

    fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
        value
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
    }
}
