use serde::{Deserialize, Serialize};

use crate::autodiff::{first_argmax, NodeId, Tape, TensorValue};
use crate::tableexec::{Operator, Program, Table, PROGRAM_LEN};

use super::matches::preprocess_matches;
use super::vocab::{PAD, PAD_TOKEN};
use super::{random_tensor, Instance, ModelError, Vocabulary};

/// Number of decode steps.
pub const STEPS: usize = PROGRAM_LEN;

/// Selection parameters for one decode step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    /// `[d]` attention query over question rows.
    pub query: TensorValue,
    /// `[2d, |ops|]` operator scores from (attended question, table summary).
    pub op_weight: TensorValue,
    /// `[|ops|]`
    pub op_bias: TensorValue,
    /// `[d, d]` maps the attended question into column-name space.
    pub col_transform: TensorValue,
    /// `[d]`
    pub col_bias: TensorValue,
    /// `[]` weight of the column-name match prior in the column logits.
    pub prior_weight: TensorValue,
    /// `[]` weight of the entry-match prior.
    pub entry_weight: TensorValue,
}

impl StepParams {
    const NAMES: [&'static str; 7] = [
        "query",
        "op_weight",
        "op_bias",
        "col_transform",
        "col_bias",
        "prior_weight",
        "entry_weight",
    ];

    fn zeros(d: usize) -> Self {
        let ops = Operator::COUNT;
        Self {
            query: TensorValue::zeros(&[d]),
            op_weight: TensorValue::zeros(&[2 * d, ops]),
            op_bias: TensorValue::zeros(&[ops]),
            col_transform: TensorValue::zeros(&[d, d]),
            col_bias: TensorValue::zeros(&[d]),
            prior_weight: TensorValue::scalar(0.0),
            entry_weight: TensorValue::scalar(0.0),
        }
    }

    fn tensors(&self) -> [&TensorValue; 7] {
        [
            &self.query,
            &self.op_weight,
            &self.op_bias,
            &self.col_transform,
            &self.col_bias,
            &self.prior_weight,
            &self.entry_weight,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut TensorValue; 7] {
        [
            &mut self.query,
            &mut self.op_weight,
            &mut self.op_bias,
            &mut self.col_transform,
            &mut self.col_bias,
            &mut self.prior_weight,
            &mut self.entry_weight,
        ]
    }
}

/// Miniature program-selection model. Each step attends over the question
/// rows with its own query vector, scores operators from the attended vector
/// and a mean of the column-name embeddings, and scores columns by matching
/// a transformed attended vector against each column-name embedding plus the
/// two prior vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TableQaModel {
    pub vocab: Vocabulary,
    /// `[|V|, d]`; the PAD row is zero.
    pub embedding: TensorValue,
    pub steps: Vec<StepParams>,
}

/// Graph inputs for one (question, table) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFeatures {
    /// Labels of the question rows: the match-augmented tokens, or a single
    /// PAD when there are none.
    pub tokens: Vec<String>,
    /// `[n, d]`
    pub question: TensorValue,
    /// `[c]`
    pub column_prior: TensorValue,
    /// `[c]`
    pub entry_prior: TensorValue,
    /// `[c, d]` mean embedding of each column name's tokens.
    pub column_names: TensorValue,
}

impl TableFeatures {
    /// Input slots of [`TableGraph`], in order.
    pub fn bindings(&self) -> Vec<TensorValue> {
        vec![
            self.question.clone(),
            self.column_prior.clone(),
            self.entry_prior.clone(),
            self.column_names.clone(),
        ]
    }
}

/// Prediction graph: inputs are the four [`TableFeatures`] slots, model
/// weights are constants.
#[derive(Debug, Clone)]
pub struct TableGraph {
    pub tape: Tape,
    pub question: NodeId,
    pub column_prior: NodeId,
    pub entry_prior: NodeId,
    pub column_names: NodeId,
    pub op_probs: [NodeId; STEPS],
    pub col_probs: [NodeId; STEPS],
}

impl TableGraph {
    /// Adds a scalar node selecting entry `index` of `probs`.
    pub fn pick(&mut self, probs: NodeId, index: usize) -> Result<NodeId, ModelError> {
        let n = self.tape.shape(probs)[0];
        let mut onehot = vec![0.0; n];
        onehot[index] = 1.0;
        let k = self.tape.constant(TensorValue::vector(onehot));
        Ok(self.tape.dot(probs, k)?)
    }
}

/// Hard program plus the per-step distributions it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePrediction {
    pub program: Program,
    pub op_probs: Vec<Vec<f64>>,
    pub col_probs: Vec<Vec<f64>>,
}

fn margin(p: &[f64]) -> f64 {
    let top = first_argmax(p);
    let runner = p
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if runner.is_finite() {
        p[top] - runner
    } else {
        f64::INFINITY
    }
}

impl TablePrediction {
    /// Per step, the gap between the selected and runner-up operator
    /// probability; the hard program is stable under any perturbation
    /// smaller than half of it.
    pub fn op_margins(&self) -> Vec<f64> {
        self.op_probs.iter().map(|p| margin(p)).collect()
    }

    pub fn col_margins(&self) -> Vec<f64> {
        self.col_probs.iter().map(|p| margin(p)).collect()
    }
}

struct StepNodes {
    query: NodeId,
    op_weight: NodeId,
    op_bias: NodeId,
    col_transform: NodeId,
    col_bias: NodeId,
    prior_weight: NodeId,
    entry_weight: NodeId,
}

impl StepNodes {
    fn from_slice(n: &[NodeId]) -> Self {
        Self {
            query: n[0],
            op_weight: n[1],
            op_bias: n[2],
            col_transform: n[3],
            col_bias: n[4],
            prior_weight: n[5],
            entry_weight: n[6],
        }
    }
}

type Heads = ([NodeId; STEPS], [NodeId; STEPS]);

fn heads(
    tape: &mut Tape,
    steps: &[StepNodes],
    q: NodeId,
    cp: NodeId,
    ep: NodeId,
    k: NodeId,
) -> Result<Heads, ModelError> {
    let summary = tape.mean_rows(k)?;
    let mut ops = [NodeId::default(); STEPS];
    let mut cols = [NodeId::default(); STEPS];
    for (t, s) in steps.iter().enumerate() {
        let scores = tape.matmul(q, s.query)?;
        let attn = tape.softmax(scores)?;
        let h = tape.matmul(attn, q)?;
        let z = tape.concat(&[h, summary])?;
        let op_logits = tape.matmul(z, s.op_weight)?;
        let op_logits = tape.add(op_logits, s.op_bias)?;
        ops[t] = tape.softmax(op_logits)?;
        let g = tape.matmul(s.col_transform, h)?;
        let g = tape.add(g, s.col_bias)?;
        let col_logits = tape.matmul(k, g)?;
        let prior = tape.mul(s.prior_weight, cp)?;
        let col_logits = tape.add(col_logits, prior)?;
        let entry = tape.mul(s.entry_weight, ep)?;
        let col_logits = tape.add(col_logits, entry)?;
        cols[t] = tape.softmax(col_logits)?;
    }
    Ok((ops, cols))
}

/// Lowercased name tokens; an empty name is a single PAD.
fn name_tokens(name: &str) -> Vec<String> {
    let t = Instance::tokenize(name);
    if t.is_empty() {
        vec![PAD_TOKEN.to_string()]
    } else {
        t
    }
}

impl TableQaModel {
    pub fn zeros(vocab: Vocabulary, dim: usize) -> Self {
        let v = vocab.len();
        Self {
            vocab,
            embedding: TensorValue::zeros(&[v, dim]),
            steps: (0..STEPS).map(|_| StepParams::zeros(dim)).collect(),
        }
    }

    /// Seeded `N(0, 0.1)` initialization; the column-prior weights start at
    /// 1 and the entry-prior weights at 0.
    pub fn random(vocab: Vocabulary, dim: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(vocab, dim);
        m.embedding = random_tensor(m.embedding.shape(), 0.1, &mut rng);
        m.embedding.row_mut(PAD).fill(0.0);
        for s in &mut m.steps {
            for t in s.tensors_mut().into_iter().take(5) {
                *t = random_tensor(t.shape(), 0.1, &mut rng);
            }
            s.prior_weight = TensorValue::scalar(1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.embedding.shape()[1]
    }

    /// `(name, tensor)` pairs in parameter order.
    pub fn named_params(&self) -> Vec<(String, &TensorValue)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (t, s) in self.steps.iter().enumerate() {
            for (name, v) in StepParams::NAMES.iter().zip(s.tensors()) {
                out.push((format!("step{t}.{name}"), v));
            }
        }
        out
    }

    pub(crate) fn params(&self) -> Vec<TensorValue> {
        self.named_params().into_iter().map(|(_, v)| v.clone()).collect()
    }

    pub(crate) fn set_params(&mut self, p: Vec<TensorValue>) {
        let mut it = p.into_iter();
        self.embedding = it.next().expect("embedding");
        for s in &mut self.steps {
            for slot in s.tensors_mut() {
                *slot = it.next().expect("step parameter");
            }
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.dim();
        let bad = |msg: String| Err(ModelError::Checkpoint(msg));
        if self.embedding.shape() != [self.vocab.len(), d] {
            return bad(format!("embedding shape {:?}", self.embedding.shape()));
        }
        if self.steps.len() != STEPS {
            return bad(format!("{} decode steps, expected {STEPS}", self.steps.len()));
        }
        let reference = StepParams::zeros(d);
        for (t, s) in self.steps.iter().enumerate() {
            for ((name, a), b) in StepParams::NAMES.iter().zip(s.tensors()).zip(reference.tensors()) {
                if a.shape() != b.shape() {
                    return bad(format!("step{t}.{name} shape {:?}, expected {:?}", a.shape(), b.shape()));
                }
            }
        }
        if self.params().iter().any(|t| !t.all_finite()) {
            return bad("non-finite table model weights".into());
        }
        if self.embedding.row(PAD).iter().any(|&x| x != 0.0) {
            return bad("PAD embedding row must be zero".into());
        }
        Ok(())
    }

    fn embed_rows(&self, tokens: &[String]) -> TensorValue {
        let d = self.dim();
        let mut data = Vec::with_capacity(tokens.len() * d);
        for t in tokens {
            data.extend_from_slice(self.embedding.row(self.vocab.id(t)));
        }
        TensorValue::matrix(tokens.len(), d, data)
    }

    /// `[c, d]` column-name embeddings.
    pub fn column_name_matrix(&self, table: &Table) -> TensorValue {
        let d = self.dim();
        let mut data = Vec::with_capacity(table.num_columns() * d);
        for name in table.columns() {
            let toks = name_tokens(name);
            let mut acc = vec![0.0; d];
            for t in &toks {
                for (a, x) in acc.iter_mut().zip(self.embedding.row(self.vocab.id(t))) {
                    *a += x;
                }
            }
            data.extend(acc.into_iter().map(|x| x / toks.len() as f64));
        }
        TensorValue::matrix(table.num_columns(), d, data)
    }

    /// Applies match preprocessing to `question` and embeds the result.
    pub fn features(&self, question: &[String], table: &Table) -> Result<TableFeatures, ModelError> {
        if table.num_columns() == 0 {
            return Err(ModelError::NoColumns);
        }
        let prepared = preprocess_matches(question, table);
        let mut tokens = prepared.tokens;
        if tokens.is_empty() {
            tokens.push(PAD_TOKEN.to_string());
        }
        Ok(TableFeatures {
            question: self.embed_rows(&tokens),
            tokens,
            column_prior: TensorValue::vector(prepared.column_prior.0),
            entry_prior: TensorValue::vector(prepared.entry_prior.0),
            column_names: self.column_name_matrix(table),
        })
    }

    fn constant_steps(&self, tape: &mut Tape) -> Vec<StepNodes> {
        self.steps
            .iter()
            .map(|s| {
                let ids: Vec<NodeId> = s.tensors().into_iter().map(|v| tape.constant(v.clone())).collect();
                StepNodes::from_slice(&ids)
            })
            .collect()
    }

    /// Graph for a question of `rows` embedded rows over a table with
    /// `columns` columns.
    pub fn graph(&self, rows: usize, columns: usize) -> Result<TableGraph, ModelError> {
        if columns == 0 {
            return Err(ModelError::NoColumns);
        }
        let d = self.dim();
        let mut tape = Tape::new();
        let question = tape.input(&[rows, d]);
        let column_prior = tape.input(&[columns]);
        let entry_prior = tape.input(&[columns]);
        let column_names = tape.input(&[columns, d]);
        let steps = self.constant_steps(&mut tape);
        let (op_probs, col_probs) =
            heads(&mut tape, &steps, question, column_prior, entry_prior, column_names)?;
        Ok(TableGraph {
            tape,
            question,
            column_prior,
            entry_prior,
            column_names,
            op_probs,
            col_probs,
        })
    }

    /// Per-step distributions and hard program for given features.
    pub fn predict_features(&self, f: &TableFeatures) -> Result<TablePrediction, ModelError> {
        let g = self.graph(f.question.shape()[0], f.column_prior.len())?;
        let ev = g.tape.forward(&f.bindings())?;
        let op_probs: Vec<Vec<f64>> = g.op_probs.iter().map(|&n| ev.value(n).data().to_vec()).collect();
        let col_probs: Vec<Vec<f64>> = g.col_probs.iter().map(|&n| ev.value(n).data().to_vec()).collect();
        let mut steps = [(Operator::ResetSelect, 0); STEPS];
        for t in 0..STEPS {
            let op = Operator::from_ordinal(first_argmax(&op_probs[t])).expect("operator ordinal");
            steps[t] = (op, first_argmax(&col_probs[t]));
        }
        Ok(TablePrediction {
            program: Program::new(steps),
            op_probs,
            col_probs,
        })
    }

    /// Program selection for a raw question over `table`.
    pub fn predict(&self, question: &[String], table: &Table) -> Result<TablePrediction, ModelError> {
        self.predict_features(&self.features(question, table)?)
    }

    /// Tape computing the summed per-step operator and column cross-entropy
    /// against the gold program; inputs are the parameters in
    /// [`TableQaModel::named_params`] order.
    pub(crate) fn loss_tape(&self, instance: &Instance) -> Result<(Tape, NodeId), ModelError> {
        let table = instance
            .table
            .as_ref()
            .ok_or_else(|| ModelError::MissingTable(instance.id.clone()))?;
        let gold = instance
            .gold_program
            .as_ref()
            .ok_or_else(|| ModelError::MissingGoldProgram(instance.id.clone()))?;
        if table.num_columns() == 0 {
            return Err(ModelError::NoColumns);
        }
        let prepared = preprocess_matches(&instance.question, table);
        let mut ids = self.vocab.ids(&prepared.tokens);
        if ids.is_empty() {
            ids.push(PAD);
        }
        let c = table.num_columns();

        // column-name rows are gathered, then averaged per column
        let mut name_ids = Vec::new();
        let mut spans = Vec::with_capacity(c);
        for name in table.columns() {
            let toks = name_tokens(name);
            spans.push((name_ids.len(), toks.len()));
            name_ids.extend(self.vocab.ids(&toks));
        }
        let mut avg = vec![0.0; c * name_ids.len()];
        for (col, &(start, len)) in spans.iter().enumerate() {
            for j in start..start + len {
                avg[col * name_ids.len() + j] = 1.0 / len as f64;
            }
        }

        let mut tape = Tape::new();
        let emb = tape.input(self.embedding.shape());
        let mut step_nodes = Vec::with_capacity(STEPS);
        for s in &self.steps {
            let ids: Vec<NodeId> = s.tensors().into_iter().map(|v| tape.input(v.shape())).collect();
            step_nodes.push(StepNodes::from_slice(&ids));
        }
        let q = tape.row_select(emb, &ids)?;
        let name_rows = tape.row_select(emb, &name_ids)?;
        let avg = tape.constant(TensorValue::matrix(c, name_ids.len(), avg));
        let k = tape.matmul(avg, name_rows)?;
        let cp = tape.constant(TensorValue::vector(prepared.column_prior.0));
        let ep = tape.constant(TensorValue::vector(prepared.entry_prior.0));
        let (ops, cols) = heads(&mut tape, &step_nodes, q, cp, ep, k)?;

        let mut total: Option<NodeId> = None;
        for (t, step) in gold.steps().iter().enumerate() {
            if step.column >= c {
                return Err(ModelError::InvalidInstance(format!(
                    "{}: gold program column {} out of range",
                    instance.id, step.column
                )));
            }
            for (probs, index, n) in [
                (ops[t], step.op.ordinal(), Operator::COUNT),
                (cols[t], step.column, c),
            ] {
                let mut onehot = vec![0.0; n];
                onehot[index] = 1.0;
                let k = tape.constant(TensorValue::vector(onehot));
                let p = tape.dot(probs, k)?;
                let lp = tape.log(p);
                total = Some(match total {
                    Some(acc) => tape.add(acc, lp)?,
                    None => lp,
                });
            }
        }
        let neg = tape.constant(TensorValue::scalar(-1.0));
        let loss = tape.mul(total.expect("nonempty program"), neg)?;
        Ok((tape, loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableexec::Cell;

    fn table() -> Table {
        Table::new(
            vec!["name".into(), "score".into()],
            vec![
                vec![Cell::Text("a".into()), Cell::Number(3.0)],
                vec![Cell::Text("b".into()), Cell::Number(1.0)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_are_uniform() {
        let m = TableQaModel::zeros(Vocabulary::from_tokens(["who", "score"]), 4);
        let p = m.predict(&Instance::tokenize("who has the lowest score"), &table()).unwrap();
        for t in 0..STEPS {
            for &x in &p.op_probs[t] {
                assert!((x - 1.0 / Operator::COUNT as f64).abs() < 1e-15);
            }
            // column prior enters with zero weight
            for &x in &p.col_probs[t] {
                assert!((x - 0.5).abs() < 1e-15);
            }
        }
        assert_eq!(p.program.operators(), [Operator::ResetSelect; 4]);
        assert_eq!(p.op_margins(), vec![0.0; 4]);
    }

    #[test]
    fn keyed_on_lowest_selects_min() {
        // step 3 operator logit for min is large whenever "lowest" is present
        let vocab = Vocabulary::from_tokens(["lowest"]);
        let mut m = TableQaModel::zeros(vocab, 4);
        let id = m.vocab.id("lowest");
        m.embedding.row_mut(id)[0] = 1.0;
        m.steps[2].op_weight.row_mut(0)[Operator::Min.ordinal()] = 20.0;
        m.steps[3].op_bias.data_mut()[Operator::Print.ordinal()] = 1.0;
        let p = m.predict(&Instance::tokenize("who has the lowest score"), &table()).unwrap();
        let ops = p.program.operators();
        assert_eq!(ops[2], Operator::Min);
        assert_eq!(ops[3], Operator::Print);
        let p = m.predict(&Instance::tokenize("who has the highest score"), &table()).unwrap();
        assert_eq!(p.program.operators()[2], Operator::ResetSelect);
    }

    #[test]
    fn probabilities_normalized() {
        let m = TableQaModel::random(Vocabulary::from_tokens(["a", "score", "name"]), 6, 11);
        m.validate().unwrap();
        let p = m.predict(&Instance::tokenize("a score"), &table()).unwrap();
        for v in p.op_probs.iter().chain(&p.col_probs) {
            assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(v.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn empty_question_is_deterministic() {
        let m = TableQaModel::random(Vocabulary::from_tokens(["score", "name"]), 6, 2);
        let a = m.predict(&[], &table()).unwrap();
        let b = m.predict(&[], &table()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_columns_rejected() {
        let m = TableQaModel::zeros(Vocabulary::new(), 4);
        let t = Table::new(vec![], vec![vec![], vec![]]).unwrap();
        assert!(matches!(m.predict(&[], &t), Err(ModelError::NoColumns)));
    }

    #[test]
    fn params_round_trip() {
        let m = TableQaModel::random(Vocabulary::from_tokens(["x"]), 3, 5);
        let mut z = TableQaModel::zeros(m.vocab.clone(), 3);
        z.set_params(m.params());
        assert_eq!(z, m);
        assert_eq!(m.named_params().len(), 1 + 7 * STEPS);
    }
}
