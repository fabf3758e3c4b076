//! Dataset ingestion, synthetic corpora and report persistence.

mod generate;
mod io;

pub use generate::{
    generate_classifier, generate_synthetic, ClassifierGenConfig, GenConfig, Template, TemplateCounts,
};
pub use io::{
    load_dataset, load_jsonl, parse_jsonl, save_json, save_jsonl, save_report, to_jsonl, Format, TokenPolicy,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Instance, Vocabulary};
use crate::tableexec::{Answer, ExecError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("generated instance {0} disagrees with its template answer")]
    Unsound(String),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { config: GenConfig },
    Classifier { config: ClassifierGenConfig },
    File { path: String },
    Derived { note: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub vocab: Vocabulary,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Whether every instance carries a table.
    pub fn is_table_qa(&self) -> bool {
        !self.instances.is_empty() && self.instances.iter().all(|i| i.table.is_some())
    }

    /// Distinct answers in first-occurrence order, as classifier labels.
    pub fn classes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for inst in &self.instances {
            let label = answer_label(&inst.gold_answer);
            if !out.contains(&label) {
                out.push(label);
            }
        }
        out
    }

    /// First `ceil(fraction · n)` instances and the rest.
    pub fn split(&self, fraction: f64) -> (Dataset, Dataset) {
        let k = ((self.len() as f64) * fraction.clamp(0.0, 1.0)).ceil() as usize;
        let part = |instances: Vec<Instance>, which: &str| Dataset {
            vocab: self.vocab.clone(),
            instances,
            provenance: Provenance::Derived {
                note: format!("{which} split at {k} of {}", self.len()),
            },
        };
        (
            part(self.instances[..k].to_vec(), "head"),
            part(self.instances[k..].to_vec(), "tail"),
        )
    }
}

fn answer_label(a: &Answer) -> String {
    a.canonical().join("|")
}

/// Vocabulary over question tokens and column-name tokens, in first
/// occurrence order.
pub fn build_vocab(instances: &[Instance]) -> Vocabulary {
    let mut v = Vocabulary::new();
    extend_vocab(&mut v, instances);
    v
}

pub fn extend_vocab(v: &mut Vocabulary, instances: &[Instance]) {
    for inst in instances {
        for t in &inst.question {
            v.insert(t);
        }
        if let Some(table) = &inst.table {
            for name in table.columns() {
                for t in Instance::tokenize(name) {
                    v.insert(&t);
                }
            }
        }
    }
}
