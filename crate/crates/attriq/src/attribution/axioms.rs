use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, TensorValue};
use crate::models::{ClassifierModel, Instance, Model, ModelError, PAD_TOKEN, STEPS};

use super::{integrate_path, integrated_gradients, AttributionError, IGConfig, TargetSelector};

/// Per-instance axiom diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    /// `|Σ IG − (F(x) − F(x′))|` per instance.
    pub completeness: Vec<f64>,
    /// `|a_0 − a_dup|` after appending a copy of the first token.
    pub symmetry: Vec<f64>,
    /// `|a_pad|` after appending a PAD token.
    pub dummy: Vec<f64>,
    /// `max |IG_F − (0.3 IG_F1 + 0.7 IG_F2)|` for the supplied pair.
    pub linearity: Option<f64>,
}

impl AxiomReport {
    pub fn max_completeness(&self) -> f64 {
        self.completeness.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_symmetry(&self) -> f64 {
        self.symmetry.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_dummy(&self) -> f64 {
        self.dummy.iter().copied().fold(0.0, f64::max)
    }
}

/// Resolves an unset target: the arg-max class for classifiers, the
/// selected operator at the final step for table models.
fn resolve(model: &Model, instance: &Instance, cfg: &IGConfig) -> Result<IGConfig, AttributionError> {
    let mut cfg = cfg.clone();
    if cfg.target.is_none() {
        if let Model::TableQa(m) = model {
            let table = instance
                .table
                .as_ref()
                .ok_or_else(|| ModelError::MissingTable(instance.id.clone()))?;
            let p = m.predict(&instance.question, table)?;
            let step = STEPS - 1;
            cfg.target = Some(TargetSelector::Operator {
                step,
                op: p.program.steps()[step].op,
            });
        }
    }
    Ok(cfg)
}

/// Completeness, symmetry and dummy checks on every instance with a
/// non-empty question, plus a linearity check when `pair` is given.
pub fn axiom_suite(
    model: &Model,
    instances: &[Instance],
    cfg: &IGConfig,
    pair: Option<(&ClassifierModel, &ClassifierModel, &Instance)>,
) -> Result<AxiomReport, AttributionError> {
    let mut out = AxiomReport::default();
    for inst in instances.iter().filter(|i| !i.question.is_empty()) {
        let c = resolve(model, inst, cfg)?;
        out.completeness.push(integrated_gradients(model, inst, &c)?.residual);

        let n = inst.question.len();
        let mut q = inst.question.clone();
        q.push(inst.question[0].clone());
        let r = integrated_gradients(model, &inst.with_question(q), &c)?;
        out.symmetry.push((r.token_scores[0] - r.token_scores[n]).abs());

        let mut q = inst.question.clone();
        q.push(PAD_TOKEN.to_string());
        let r = integrated_gradients(model, &inst.with_question(q), &c)?;
        out.dummy.push(r.token_scores[n].abs());
    }
    if let Some((f1, f2, inst)) = pair {
        out.linearity = Some(linearity_delta(f1, f2, &inst.question, 0, cfg)?);
    }
    Ok(out)
}

fn class_prob(tape: &mut Tape, x: NodeId, output: &TensorValue, class: usize) -> Result<NodeId, AttributionError> {
    let w = tape.constant(output.clone());
    let pooled = tape.mean_rows(x).map_err(ModelError::from)?;
    let logits = tape.matmul(pooled, w).map_err(ModelError::from)?;
    let probs = tape.softmax(logits).map_err(ModelError::from)?;
    let mut onehot = vec![0.0; output.shape()[1]];
    onehot[class] = 1.0;
    let k = tape.constant(TensorValue::vector(onehot));
    Ok(tape.dot(probs, k).map_err(ModelError::from)?)
}

/// For two classifiers sharing an embedding table, compares IG of
/// `0.3·p₁(class) + 0.7·p₂(class)` against the same combination of the
/// individual attributions. Returns the largest absolute difference.
pub fn linearity_delta(
    f1: &ClassifierModel,
    f2: &ClassifierModel,
    tokens: &[String],
    class: usize,
    cfg: &IGConfig,
) -> Result<f64, AttributionError> {
    if f1.embedding != f2.embedding || f1.vocab != f2.vocab {
        return Err(AttributionError::InvalidTarget(
            "linearity pair must share the embedding table".into(),
        ));
    }
    if class >= f1.num_classes() || class >= f2.num_classes() {
        return Err(AttributionError::InvalidTarget(format!("class {class}")));
    }
    let x = f1.embed(tokens);
    let xb = TensorValue::zeros(x.shape());
    let ig = |build: &dyn Fn(&mut Tape, NodeId) -> Result<NodeId, AttributionError>| {
        let mut tape = Tape::new();
        let input = tape.input(x.shape());
        let f = build(&mut tape, input)?;
        let r = integrate_path(&tape, f, &[x.clone()], &[xb.clone()], cfg.steps, cfg.quadrature)?;
        Ok::<_, AttributionError>(r.attributions[0].data().to_vec())
    };
    let a1 = ig(&|t, x| class_prob(t, x, &f1.output, class))?;
    let a2 = ig(&|t, x| class_prob(t, x, &f2.output, class))?;
    let mixed = ig(&|t, x| {
        let p1 = class_prob(t, x, &f1.output, class)?;
        let p2 = class_prob(t, x, &f2.output, class)?;
        let w1 = t.constant(TensorValue::scalar(0.3));
        let w2 = t.constant(TensorValue::scalar(0.7));
        let a = t.mul(w1, p1).map_err(ModelError::from)?;
        let b = t.mul(w2, p2).map_err(ModelError::from)?;
        Ok(t.add(a, b).map_err(ModelError::from)?)
    })?;
    Ok(mixed
        .iter()
        .zip(a1.iter().zip(&a2))
        .map(|(m, (x, y))| (m - (0.3 * x + 0.7 * y)).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Vocabulary;
    use crate::tableexec::Answer;

    #[test]
    fn suite_on_random_classifier() {
        let vocab = Vocabulary::from_tokens(["a", "b", "c"]);
        let classes = vec!["x".to_string(), "y".to_string(), "z".to_string()];
        let f1 = ClassifierModel::random(vocab.clone(), classes.clone(), 4, 1);
        let mut f2 = ClassifierModel::random(vocab, classes, 4, 2);
        f2.embedding = f1.embedding.clone();
        let inst = Instance::new("0", Instance::tokenize("a b c a"), Answer::label("x"));
        let empty = Instance::new("1", vec![], Answer::label("x"));
        let model = Model::Classifier(f1.clone());
        let r = axiom_suite(&model, &[inst.clone(), empty], &IGConfig::with_steps(512), Some((&f1, &f2, &inst)))
            .unwrap();
        assert_eq!(r.completeness.len(), 1);
        assert!(r.max_completeness() <= 1e-4);
        assert!(r.max_symmetry() <= 1e-10);
        assert_eq!(r.max_dummy(), 0.0);
        assert!(r.linearity.unwrap() <= 1e-8);
    }

    #[test]
    fn linearity_needs_shared_embedding() {
        let vocab = Vocabulary::from_tokens(["a"]);
        let f1 = ClassifierModel::random(vocab.clone(), vec!["x".into()], 2, 1);
        let f2 = ClassifierModel::random(vocab, vec!["x".into()], 2, 2);
        assert!(linearity_delta(&f1, &f2, &Instance::tokenize("a"), 0, &IGConfig::default()).is_err());
    }
}
