use serde::{Deserialize, Serialize};

use crate::tableexec::{Answer, Program, Table};

use super::ModelError;

fn is_false(b: &bool) -> bool {
    !*b
}

/// One question-answering example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub question: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Table>,
    pub gold_answer: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_program: Option<Program>,
    #[serde(default, rename = "pos", skip_serializing_if = "Option::is_none")]
    pub pos_tags: Option<Vec<String>>,
    /// Half-open token range `[start, end)` of the question's subject.
    #[serde(default, rename = "subject", skip_serializing_if = "Option::is_none")]
    pub subject_span: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub order_sensitive: bool,
}

impl Instance {
    pub fn new(id: impl Into<String>, question: Vec<String>, gold_answer: Answer) -> Self {
        Self {
            id: id.into(),
            question,
            table: None,
            gold_answer,
            gold_program: None,
            pos_tags: None,
            subject_span: None,
            order_sensitive: false,
        }
    }

    /// Lowercase, whitespace-split tokens.
    pub fn tokenize(text: &str) -> Vec<String> {
        text.split_whitespace().map(|t| t.to_lowercase()).collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if let Some(tags) = &self.pos_tags {
            if tags.len() != self.question.len() {
                return Err(ModelError::InvalidInstance(format!(
                    "{}: {} pos tags for {} tokens",
                    self.id,
                    tags.len(),
                    self.question.len()
                )));
            }
        }
        if let Some((s, e)) = self.subject_span {
            if s >= e || e > self.question.len() {
                return Err(ModelError::InvalidInstance(format!(
                    "{}: subject span [{s}, {e}) outside question of length {}",
                    self.id,
                    self.question.len()
                )));
            }
        }
        Ok(())
    }

    /// Copy with a different question; dependent annotations are dropped.
    pub fn with_question(&self, question: Vec<String>) -> Instance {
        Instance {
            question,
            pos_tags: None,
            subject_span: None,
            ..self.clone()
        }
    }
}
