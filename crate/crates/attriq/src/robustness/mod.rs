//! The overstability test, attribution-guided attacks, and the
//! default-program, trigger and attack-efficacy analyses.

mod analysis;
mod attacks;
mod overstability;
mod wordlists;

pub use analysis::{
    attack_efficacy_split, default_program_analysis, operator_trigger_table, top_token, DefaultProgramAnalysis,
    DefaultProgramGroup, EfficacyRecord, EfficacySplit, ThresholdPolicy, TriggerRow, TriggerTable,
};
pub use attacks::{
    concat_attack, row_reorder_attack, stopword_deletion_attack, subject_ablation_attack, summary_csv,
    union_accuracy, AttackRecord, AttackResult, Position, ReorderMode, SubjectAblation,
};
pub use overstability::{
    full_ranking, overstability_curve, restrict_question, top_attributed_vocab, CurvePoint, OverstabilityCurve,
};
pub use wordlists::{load_list, parse_list, WordLists};

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::attribution::AttributionError;
use crate::models::{Instance, Model, ModelError, Prediction};
use crate::tableexec::ExecError;

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("every attribution report is omitted")]
    AllOmitted,
    #[error("invalid vocabulary sizes: {0}")]
    InvalidSizes(String),
    #[error("attack phrase is empty")]
    EmptyPhrase,
    #[error("no instances with tables")]
    NoTables,
    #[error("attack results cover different instances")]
    MismatchedResults,
    #[error("record {index}: {message}")]
    InvalidRecord { index: usize, message: String },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Predictions for every instance, in parallel, in input order.
pub(crate) fn predict_all(model: &Model, instances: &[Instance]) -> Result<Vec<Prediction>, RobustnessError> {
    instances
        .par_iter()
        .map(|i| model.predict(i).map_err(RobustnessError::from))
        .collect()
}

/// Fraction of instances answered correctly; 0 for an empty slice.
pub fn accuracy(model: &Model, instances: &[Instance]) -> Result<f64, RobustnessError> {
    let preds = predict_all(model, instances)?;
    Ok(fraction(
        preds.iter().zip(instances).filter(|(p, i)| p.is_correct(&i.gold_answer)).count(),
        instances.len(),
    ))
}

pub(crate) fn fraction(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}
