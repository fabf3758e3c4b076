use crate::autodiff::{first_argmax, NodeId, Tape, TensorValue};
use crate::tableexec::Answer;

use super::vocab::{PAD, PAD_TOKEN};
use super::{random_tensor, Instance, ModelError, Vocabulary};

/// Bag-of-embeddings answer classifier: mean of token embeddings, a linear
/// map to class logits, softmax. The PAD embedding row is held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub vocab: Vocabulary,
    /// `[|V|, d]`
    pub embedding: TensorValue,
    /// `[d, C]`
    pub output: TensorValue,
    pub classes: Vec<String>,
}

/// Prediction graph over an embedded question of fixed length.
#[derive(Debug, Clone)]
pub struct ClassifierGraph {
    pub tape: Tape,
    /// Input `[n, d]`: embedded question rows.
    pub question: NodeId,
    /// `[C]` class probabilities.
    pub probs: NodeId,
}

impl ClassifierGraph {
    /// Adds a scalar node for the probability of `class`.
    pub fn pick(&mut self, class: usize) -> Result<NodeId, ModelError> {
        let c = self.tape.shape(self.probs)[0];
        let mut onehot = vec![0.0; c];
        onehot[class] = 1.0;
        let k = self.tape.constant(TensorValue::vector(onehot));
        Ok(self.tape.dot(self.probs, k)?)
    }
}

fn head(tape: &mut Tape, rows: NodeId, output: NodeId) -> Result<NodeId, ModelError> {
    let pooled = tape.mean_rows(rows)?;
    let logits = tape.matmul(pooled, output)?;
    Ok(tape.softmax(logits)?)
}

impl ClassifierModel {
    pub fn zeros(vocab: Vocabulary, classes: Vec<String>, dim: usize) -> Self {
        let v = vocab.len();
        let c = classes.len();
        Self {
            vocab,
            embedding: TensorValue::zeros(&[v, dim]),
            output: TensorValue::zeros(&[dim, c]),
            classes,
        }
    }

    pub fn random(vocab: Vocabulary, classes: Vec<String>, dim: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut embedding = random_tensor(&[vocab.len(), dim], 0.1, &mut rng);
        embedding.row_mut(PAD).fill(0.0);
        let output = random_tensor(&[dim, classes.len()], 0.1, &mut rng);
        Self {
            vocab,
            embedding,
            output,
            classes,
        }
    }

    pub fn dim(&self) -> usize {
        self.embedding.shape()[1]
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (v, d, c) = (self.vocab.len(), self.dim(), self.classes.len());
        if self.embedding.shape() != [v, d] || self.output.shape() != [d, c] || c == 0 {
            return Err(ModelError::Checkpoint(format!(
                "classifier shapes embedding {:?} output {:?} for |V|={v} C={c}",
                self.embedding.shape(),
                self.output.shape()
            )));
        }
        if !self.embedding.all_finite() || !self.output.all_finite() {
            return Err(ModelError::Checkpoint("non-finite classifier weights".into()));
        }
        if self.embedding.row(PAD).iter().any(|&x| x != 0.0) {
            return Err(ModelError::Checkpoint("PAD embedding row must be zero".into()));
        }
        Ok(())
    }

    /// Embedded question `[max(n, 1), d]`; an empty question is one PAD row.
    pub fn embed(&self, tokens: &[String]) -> TensorValue {
        let d = self.dim();
        if tokens.is_empty() {
            return TensorValue::zeros(&[1, d]);
        }
        let mut data = Vec::with_capacity(tokens.len() * d);
        for t in tokens {
            data.extend_from_slice(self.embedding.row(self.vocab.id(t)));
        }
        TensorValue::matrix(tokens.len(), d, data)
    }

    /// Tokens aligned with the rows of [`ClassifierModel::embed`].
    pub fn feature_tokens(tokens: &[String]) -> Vec<String> {
        if tokens.is_empty() {
            vec![PAD_TOKEN.to_string()]
        } else {
            tokens.to_vec()
        }
    }

    pub fn graph(&self, rows: usize) -> Result<ClassifierGraph, ModelError> {
        let mut tape = Tape::new();
        let question = tape.input(&[rows, self.dim()]);
        let output = tape.constant(self.output.clone());
        let probs = head(&mut tape, question, output)?;
        Ok(ClassifierGraph { tape, question, probs })
    }

    /// Class probabilities for an embedded question.
    pub fn probabilities_from(&self, features: &TensorValue) -> Result<Vec<f64>, ModelError> {
        let g = self.graph(features.shape()[0])?;
        let ev = g.tape.forward(std::slice::from_ref(features))?;
        Ok(ev.value(g.probs).data().to_vec())
    }

    pub fn probabilities(&self, tokens: &[String]) -> Result<Vec<f64>, ModelError> {
        self.probabilities_from(&self.embed(tokens))
    }

    /// Probability vector over classes for `instance`.
    pub fn predict(&self, instance: &Instance) -> Result<Vec<f64>, ModelError> {
        self.probabilities(&instance.question)
    }

    /// Arg-max class, lowest index on ties.
    pub fn predict_class(&self, tokens: &[String]) -> Result<usize, ModelError> {
        Ok(first_argmax(&self.probabilities(tokens)?))
    }

    pub fn class_index(&self, answer: &Answer) -> Option<usize> {
        let key = answer.canonical();
        self.classes
            .iter()
            .position(|c| Answer::label(c.clone()).canonical() == key)
    }

    pub(crate) fn params(&self) -> Vec<TensorValue> {
        vec![self.embedding.clone(), self.output.clone()]
    }

    pub(crate) fn set_params(&mut self, mut p: Vec<TensorValue>) {
        self.output = p.pop().expect("output");
        self.embedding = p.pop().expect("embedding");
    }

    /// Tape computing `-log p(gold)`; inputs are the parameters in
    /// [`ClassifierModel::params`] order.
    pub(crate) fn loss_tape(&self, instance: &Instance) -> Result<(Tape, NodeId), ModelError> {
        let gold = self
            .class_index(&instance.gold_answer)
            .ok_or_else(|| ModelError::UnknownClass(instance.gold_answer.to_string()))?;
        let mut tape = Tape::new();
        let emb = tape.input(self.embedding.shape());
        let out = tape.input(self.output.shape());
        let mut ids = self.vocab.ids(&instance.question);
        if ids.is_empty() {
            ids.push(PAD);
        }
        let rows = tape.row_select(emb, &ids)?;
        let probs = head(&mut tape, rows, out)?;
        let mut onehot = vec![0.0; self.num_classes()];
        onehot[gold] = 1.0;
        let k = tape.constant(TensorValue::vector(onehot));
        let p = tape.dot(probs, k)?;
        let lp = tape.log(p);
        let neg = tape.constant(TensorValue::scalar(-1.0));
        let loss = tape.mul(lp, neg)?;
        Ok((tape, loss))
    }
}
