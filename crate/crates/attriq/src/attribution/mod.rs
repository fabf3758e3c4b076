//! Integrated Gradients for the built-in models.
//!
//! Attributions are taken with respect to the embedded question (one row
//! per token, after match preprocessing for the table model) and the two
//! column prior vectors. The baseline keeps the table and replaces every
//! question row by the PAD embedding, with both priors zeroed.

mod axioms;
mod ig;

pub use axioms::{axiom_suite, linearity_delta, AxiomReport};
pub use ig::{integrate_path, PathIntegral, Quadrature};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{first_argmax, AutodiffError, TensorValue};
use crate::models::{
    ClassifierModel, Instance, Model, ModelError, TableFeatures, TableQaModel, PAD_TOKEN, STEPS,
};
use crate::tableexec::{Answer, Operator, Table};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite value at node {node} ({op}) at alpha = {alpha}")]
    NonFinite {
        alpha: f64,
        node: usize,
        op: &'static str,
    },
    #[error("non-finite gradient at alpha = {alpha}")]
    NonFiniteGradient { alpha: f64 },
    #[error("autodiff failure at alpha = {alpha}: {source}")]
    Autodiff { alpha: f64, source: AutodiffError },
    #[error("quadrature needs at least one step")]
    ZeroSteps,
    #[error("baseline does not match the input's shapes")]
    BaselineShape,
    #[error("attribution target is not a scalar")]
    NotScalar,
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("report for {0} is omitted: the prediction equals the baseline prediction")]
    Omitted(String),
    #[error("reports come from different instances ({0} and {1})")]
    MismatchedInstances(String, String),
}

impl AttributionError {
    pub(crate) fn at(alpha: f64, e: AutodiffError) -> Self {
        match e {
            AutodiffError::NonFinite { node, op } => AttributionError::NonFinite { alpha, node, op },
            source => AttributionError::Autodiff { alpha, source },
        }
    }
}

/// The scalar output being attributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSelector {
    Class { class: usize },
    Operator { step: usize, op: Operator },
    Column { step: usize, column: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IGConfig {
    pub steps: usize,
    pub quadrature: Quadrature,
    /// `None`: the arg-max class of a classifier at the input.
    pub target: Option<TargetSelector>,
}

impl Default for IGConfig {
    fn default() -> Self {
        Self {
            steps: 64,
            quadrature: Quadrature::Trapezoid,
            target: None,
        }
    }
}

impl IGConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }
}

/// The uninformative reference instance: same token count, every token
/// PAD, table unchanged. Prior vectors are zeroed when the baseline is
/// embedded.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub instance: Instance,
}

pub fn make_baseline(instance: &Instance) -> Baseline {
    Baseline {
        instance: instance.with_question(vec![PAD_TOKEN.to_string(); instance.question.len()]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub instance_id: String,
    pub target: TargetSelector,
    pub steps: usize,
    pub quadrature: Quadrature,
    /// Labels of the attributed question rows.
    pub tokens: Vec<String>,
    /// Per token, per embedding dimension.
    pub token_features: Vec<Vec<f64>>,
    /// Per token: sum over its embedding dimensions.
    pub token_scores: Vec<f64>,
    /// Table column names labelling the prior entries (table model only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub column_prior: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entry_prior: Vec<f64>,
    /// Per column: attribution to its name embedding (zero unless the
    /// baseline differs there).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub column_name_scores: Vec<f64>,
    pub f_input: f64,
    pub f_baseline: f64,
    pub residual: f64,
    /// Arg-max of the target's distribution at the input and the baseline.
    pub predicted: usize,
    pub baseline_predicted: usize,
    pub predicted_label: String,
    pub baseline_label: String,
    pub gold: Answer,
    pub omitted: bool,
}

impl AttributionReport {
    /// Sum of every attribution in the report.
    pub fn total(&self) -> f64 {
        self.token_scores.iter().sum::<f64>()
            + self.column_prior.iter().sum::<f64>()
            + self.entry_prior.iter().sum::<f64>()
            + self.column_name_scores.iter().sum::<f64>()
    }
}

/// Ordered `(token, scalar)` pairs of a non-omitted report.
pub fn token_attribution(report: &AttributionReport) -> Result<Vec<(String, f64)>, AttributionError> {
    if report.omitted {
        return Err(AttributionError::Omitted(report.instance_id.clone()));
    }
    Ok(report
        .tokens
        .iter()
        .cloned()
        .zip(report.token_scores.iter().copied())
        .collect())
}

fn split_rows(t: &TensorValue) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows = t.shape()[0];
    let features: Vec<Vec<f64>> = (0..rows).map(|r| t.row(r).to_vec()).collect();
    let scores = features.iter().map(|r| r.iter().sum()).collect();
    (features, scores)
}

fn classifier_report(
    m: &ClassifierModel,
    instance: &Instance,
    cfg: &IGConfig,
) -> Result<AttributionReport, AttributionError> {
    let x = m.embed(&instance.question);
    let xb = TensorValue::zeros(x.shape());
    let p = m.probabilities_from(&x)?;
    let pb = m.probabilities_from(&xb)?;
    let class = match cfg.target {
        None => first_argmax(&p),
        Some(TargetSelector::Class { class }) if class < m.num_classes() => class,
        Some(t) => return Err(AttributionError::InvalidTarget(format!("{t:?} for a classifier"))),
    };
    let mut g = m.graph(x.shape()[0]).map_err(AttributionError::Model)?;
    let f = g.pick(class)?;
    let r = integrate_path(&g.tape, f, &[x], &[xb], cfg.steps, cfg.quadrature)?;
    let (token_features, token_scores) = split_rows(&r.attributions[0]);
    let (predicted, baseline_predicted) = (first_argmax(&p), first_argmax(&pb));
    Ok(AttributionReport {
        instance_id: instance.id.clone(),
        target: TargetSelector::Class { class },
        steps: cfg.steps,
        quadrature: cfg.quadrature,
        tokens: ClassifierModel::feature_tokens(&instance.question),
        token_features,
        token_scores,
        columns: Vec::new(),
        column_prior: Vec::new(),
        entry_prior: Vec::new(),
        column_name_scores: Vec::new(),
        residual: r.residual(),
        f_input: r.f_input,
        f_baseline: r.f_baseline,
        predicted,
        baseline_predicted,
        predicted_label: m.classes[predicted].clone(),
        baseline_label: m.classes[baseline_predicted].clone(),
        gold: instance.gold_answer.clone(),
        omitted: predicted == baseline_predicted,
    })
}

fn table_of(instance: &Instance) -> Result<&Table, AttributionError> {
    instance
        .table
        .as_ref()
        .ok_or_else(|| ModelError::MissingTable(instance.id.clone()).into())
}

/// Baseline features: PAD rows for every question row, zero priors, column
/// names unchanged.
fn baseline_features(f: &TableFeatures) -> TableFeatures {
    TableFeatures {
        tokens: vec![PAD_TOKEN.to_string(); f.tokens.len()],
        question: TensorValue::zeros(f.question.shape()),
        column_prior: TensorValue::zeros(f.column_prior.shape()),
        entry_prior: TensorValue::zeros(f.entry_prior.shape()),
        column_names: f.column_names.clone(),
    }
}

fn table_report(
    m: &TableQaModel,
    instance_id: &str,
    gold: &Answer,
    table: &Table,
    x: &TableFeatures,
    xb: &TableFeatures,
    target: TargetSelector,
    cfg: &IGConfig,
) -> Result<AttributionReport, AttributionError> {
    let p = m.predict_features(x)?;
    let pb = m.predict_features(xb)?;
    let c = table.num_columns();
    let mut g = m.graph(x.question.shape()[0], c)?;
    let (node, index, dist, dist_b) = match target {
        TargetSelector::Operator { step, op } if step < STEPS => {
            (g.op_probs[step], op.ordinal(), &p.op_probs[step], &pb.op_probs[step])
        }
        TargetSelector::Column { step, column } if step < STEPS && column < c => {
            (g.col_probs[step], column, &p.col_probs[step], &pb.col_probs[step])
        }
        t => return Err(AttributionError::InvalidTarget(format!("{t:?} for a table model"))),
    };
    let f = g.pick(node, index)?;
    let r = integrate_path(&g.tape, f, &x.bindings(), &xb.bindings(), cfg.steps, cfg.quadrature)?;
    let (token_features, token_scores) = split_rows(&r.attributions[0]);
    let (_, column_name_scores) = split_rows(&r.attributions[3]);
    let (predicted, baseline_predicted) = (first_argmax(dist), first_argmax(dist_b));
    let label = |i: usize| match target {
        TargetSelector::Operator { .. } => Operator::from_ordinal(i).expect("ordinal").name().to_string(),
        _ => table.columns()[i].clone(),
    };
    Ok(AttributionReport {
        instance_id: instance_id.to_string(),
        target,
        steps: cfg.steps,
        quadrature: cfg.quadrature,
        tokens: x.tokens.clone(),
        token_features,
        token_scores,
        columns: table.columns().to_vec(),
        column_prior: r.attributions[1].data().to_vec(),
        entry_prior: r.attributions[2].data().to_vec(),
        column_name_scores,
        residual: r.residual(),
        f_input: r.f_input,
        f_baseline: r.f_baseline,
        predicted,
        baseline_predicted,
        predicted_label: label(predicted),
        baseline_label: label(baseline_predicted),
        gold: gold.clone(),
        omitted: predicted == baseline_predicted,
    })
}

/// Integrated Gradients of the configured target for one instance.
///
/// Table models need an explicit operator or column target; see
/// [`step_reports`] for the full per-step set.
pub fn integrated_gradients(
    model: &Model,
    instance: &Instance,
    cfg: &IGConfig,
) -> Result<AttributionReport, AttributionError> {
    match model {
        Model::Classifier(m) => classifier_report(m, instance, cfg),
        Model::TableQa(m) => {
            let target = cfg.target.ok_or_else(|| {
                AttributionError::InvalidTarget("table models need an operator or column target".into())
            })?;
            let table = table_of(instance)?;
            let x = m.features(&instance.question, table)?;
            let xb = baseline_features(&x);
            table_report(m, &instance.id, &instance.gold_answer, table, &x, &xb, target, cfg)
        }
    }
}

/// Reports for the selected operator at each step, then the selected column
/// at each step (2·T reports).
pub fn step_reports(
    model: &TableQaModel,
    instance: &Instance,
    cfg: &IGConfig,
) -> Result<Vec<AttributionReport>, AttributionError> {
    let table = table_of(instance)?;
    let x = model.features(&instance.question, table)?;
    let xb = baseline_features(&x);
    let program = model.predict_features(&x)?.program;
    let targets = program
        .steps()
        .iter()
        .enumerate()
        .map(|(step, s)| TargetSelector::Operator { step, op: s.op })
        .chain(
            program
                .steps()
                .iter()
                .enumerate()
                .map(|(step, s)| TargetSelector::Column { step, column: s.column }),
        );
    targets
        .map(|t| table_report(model, &instance.id, &instance.gold_answer, table, &x, &xb, t, cfg))
        .collect()
}

/// Attribution of `target` to the column-name embeddings for an empty
/// question over `table`, against PAD (zero) column names.
pub fn column_name_attribution(
    model: &TableQaModel,
    table: &Table,
    target: TargetSelector,
    cfg: &IGConfig,
) -> Result<AttributionReport, AttributionError> {
    let x = model.features(&[], table)?;
    let mut xb = baseline_features(&x);
    xb.column_names = TensorValue::zeros(x.column_names.shape());
    table_report(model, "", &Answer::List(Vec::new()), table, &x, &xb, target, cfg)
}

/// [`integrated_gradients`] over a dataset, in parallel, in input order.
pub fn attribute_all(
    model: &Model,
    instances: &[Instance],
    cfg: &IGConfig,
) -> Vec<Result<AttributionReport, AttributionError>> {
    instances
        .par_iter()
        .map(|inst| integrated_gradients(model, inst, cfg))
        .collect()
}
