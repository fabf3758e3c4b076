use serde::{Deserialize, Serialize};

use crate::tableexec::Table;

use super::vocab::{CM_TOKEN, PAD_TOKEN, TM_TOKEN};

/// Per-column prior derived from question/column-name matches. Entries lie
/// in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnPriors(pub Vec<f64>);

/// A question after match preprocessing: the augmented token sequence and
/// the two prior vectors fed to the table model.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedQuestion {
    pub tokens: Vec<String>,
    pub column_prior: ColumnPriors,
    /// Entry-match prior. Kept as a separate input and always zero here.
    pub entry_prior: ColumnPriors,
}

fn is_match_token(t: &str) -> bool {
    t == TM_TOKEN || t == CM_TOKEN
}

/// Appends TM when a question token equals a cell, CM when one equals a
/// column name, and computes the column-name prior
/// `count(token == name) / question length`.
///
/// Existing TM/CM tokens are stripped first, so the operation is idempotent.
pub fn preprocess_matches(question: &[String], table: &Table) -> PreparedQuestion {
    let base: Vec<String> = question.iter().filter(|t| !is_match_token(t)).cloned().collect();
    let words = || base.iter().filter(|t| t.as_str() != PAD_TOKEN);
    let names: Vec<String> = table.columns().iter().map(|c| c.to_lowercase()).collect();

    let tm = words().any(|t| table.rows().iter().flatten().any(|c| c.text() == *t));
    let cm = words().any(|t| names.contains(t));

    let len = base.len().max(1) as f64;
    let column_prior = names
        .iter()
        .map(|name| words().filter(|t| *t == name).count() as f64 / len)
        .collect();

    let mut tokens = base.clone();
    if tm {
        tokens.push(TM_TOKEN.to_string());
    }
    if cm {
        tokens.push(CM_TOKEN.to_string());
    }
    PreparedQuestion {
        tokens,
        column_prior: ColumnPriors(column_prior),
        entry_prior: ColumnPriors(vec![0.0; names.len()]),
    }
}
