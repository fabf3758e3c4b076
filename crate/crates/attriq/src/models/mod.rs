//! Built-in differentiable question-answering models.
//!
//! [`ClassifierModel`] answers by classification over a fixed answer set;
//! [`TableQaModel`] selects a four-step operator/column program that is then
//! executed against the instance's table. Both are expressed on an autodiff
//! [`Tape`](crate::autodiff::Tape) so that any output probability can be
//! differentiated with respect to the embedded question.

mod checkpoint;
mod classifier;
mod instance;
mod matches;
mod tableqa;
mod train;
mod vocab;

pub use checkpoint::{load_model, model_from_json, model_to_json, save_model};
pub use classifier::{ClassifierGraph, ClassifierModel};
pub use instance::Instance;
pub use matches::{preprocess_matches, ColumnPriors, PreparedQuestion};
pub use tableqa::{StepParams, TableFeatures, TableGraph, TablePrediction, TableQaModel, STEPS};
pub use train::{train, TrainConfig, Trained};
pub use vocab::{Vocabulary, CM, CM_TOKEN, PAD, PAD_TOKEN, TM, TM_TOKEN, UNK, UNK_TOKEN};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, TensorValue};
use crate::tableexec::{execute, Answer, Program};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("instance {0} has no table")]
    MissingTable(String),
    #[error("instance {0} has no gold program")]
    MissingGoldProgram(String),
    #[error("table has no columns")]
    NoColumns,
    #[error("answer {0:?} is not one of the model's classes")]
    UnknownClass(String),
    #[error("non-finite loss in batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error("empty training set")]
    EmptyDataset,
    #[error("{0}")]
    Checkpoint(String),
    #[error("model kind does not fit this instance: {0}")]
    WrongKind(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Classifier,
    TableQa,
}

/// Either built-in model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Classifier(ClassifierModel),
    TableQa(TableQaModel),
}

/// Outcome of running a model on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `None` when the selected program fails to execute.
    pub answer: Option<Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<Program>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<usize>,
}

impl Prediction {
    pub fn is_correct(&self, gold: &Answer) -> bool {
        self.answer.as_ref().is_some_and(|a| a.matches(gold))
    }
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Classifier(_) => ModelKind::Classifier,
            Model::TableQa(_) => ModelKind::TableQa,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Model::Classifier(m) => &m.vocab,
            Model::TableQa(m) => &m.vocab,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Classifier(m) => m.dim(),
            Model::TableQa(m) => m.dim(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Model::Classifier(m) => m.validate(),
            Model::TableQa(m) => m.validate(),
        }
    }

    /// Predicts an answer for `instance` (its raw question; table-model
    /// match preprocessing is applied internally).
    pub fn predict(&self, instance: &Instance) -> Result<Prediction, ModelError> {
        match self {
            Model::Classifier(m) => {
                let class = m.predict_class(&instance.question)?;
                Ok(Prediction {
                    answer: Some(Answer::label(m.classes[class].clone())),
                    program: None,
                    class: Some(class),
                })
            }
            Model::TableQa(m) => {
                let table = instance
                    .table
                    .as_ref()
                    .ok_or_else(|| ModelError::MissingTable(instance.id.clone()))?;
                let pred = m.predict(&instance.question, table)?;
                let answer = execute(&pred.program, table, &instance.question).ok();
                Ok(Prediction {
                    answer,
                    program: Some(pred.program),
                    class: None,
                })
            }
        }
    }

    pub fn is_correct(&self, instance: &Instance) -> Result<bool, ModelError> {
        Ok(self.predict(instance)?.is_correct(&instance.gold_answer))
    }
}

/// `N(0, std)` entries drawn in row-major order.
pub(crate) fn random_tensor(shape: &[usize], std: f64, rng: &mut impl Rng) -> TensorValue {
    let normal = Normal::new(0.0, std).expect("valid std");
    let mut t = TensorValue::zeros(shape);
    for x in t.data_mut() {
        *x = normal.sample(rng);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableexec::{Cell, Operator, Table};

    #[test]
    fn classifier_prediction_is_label() {
        let vocab = Vocabulary::from_tokens(["a"]);
        let m = Model::Classifier(ClassifierModel::zeros(vocab, vec!["x".into(), "y".into()], 2));
        let inst = Instance::new("0", Instance::tokenize("a"), Answer::label("x"));
        let p = m.predict(&inst).unwrap();
        assert_eq!(p.class, Some(0));
        assert!(p.is_correct(&inst.gold_answer));
    }

    #[test]
    fn table_prediction_executes_program() {
        let table = Table::new(
            vec!["name".into(), "score".into()],
            vec![
                vec![Cell::Text("a".into()), Cell::Number(3.0)],
                vec![Cell::Text("b".into()), Cell::Number(1.0)],
            ],
        )
        .unwrap();
        // zero weights: every step selects reset_select(0); coerced to print(0)
        let m = Model::TableQa(TableQaModel::zeros(Vocabulary::new(), 4));
        let mut inst = Instance::new("0", vec![], Answer::List(vec![]));
        inst.table = Some(table);
        let p = m.predict(&inst).unwrap();
        assert_eq!(p.program.unwrap().operators(), [Operator::ResetSelect; 4]);
        assert_eq!(p.answer.unwrap().canonical(), vec!["a".to_string(), "b".to_string()]);
        inst.table = None;
        assert!(matches!(m.predict(&inst), Err(ModelError::MissingTable(_))));
    }
}
