//! Hand-weighted models and small tapes with known behavior, used by the
//! test suites, the examples in the README and the CLI's `--fixture` flag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{NodeId, Tape, TensorValue};
use crate::datasets::{build_vocab, generate_synthetic, Dataset, GenConfig, Provenance, TemplateCounts};
use crate::models::{ClassifierModel, Instance, TableQaModel, Vocabulary, CM_TOKEN, PAD, TM_TOKEN};
use crate::tableexec::{Answer, Operator};

/// A scalar function on a tape with an input point and a baseline.
#[derive(Debug, Clone)]
pub struct PathFixture {
    pub tape: Tape,
    pub target: NodeId,
    pub input: Vec<TensorValue>,
    pub baseline: Vec<TensorValue>,
}

/// `F(x) = w·x + 0.75` with `w = (2, −1, 0.5)`, from zero to `(1, 1, 1)`.
pub fn affine() -> PathFixture {
    let mut tape = Tape::new();
    let x = tape.input(&[3]);
    let w = tape.constant(TensorValue::vector(vec![2.0, -1.0, 0.5]));
    let c = tape.constant(TensorValue::scalar(0.75));
    let d = tape.dot(x, w).expect("shapes");
    let target = tape.add(d, c).expect("shapes");
    PathFixture {
        tape,
        target,
        input: vec![TensorValue::vector(vec![1.0, 1.0, 1.0])],
        baseline: vec![TensorValue::zeros(&[3])],
    }
}

/// `F(x) = x₁·x₂` from `(0, 0)` to `(1, 1)`.
pub fn product() -> PathFixture {
    let mut tape = Tape::new();
    let a = tape.input(&[]);
    let b = tape.input(&[]);
    let target = tape.mul(a, b).expect("scalars");
    PathFixture {
        tape,
        target,
        input: vec![TensorValue::scalar(1.0), TensorValue::scalar(1.0)],
        baseline: vec![TensorValue::scalar(0.0), TensorValue::scalar(0.0)],
    }
}

/// One-hidden-layer tanh network `v·tanh(xW + b)` on a 4-dimensional input,
/// weights drawn `N(0, 1)` from `seed`; the input point is drawn from the
/// same stream and the baseline is zero.
pub fn tanh_mlp(seed: u64) -> PathFixture {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("std");
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
    let (n_in, n_hidden) = (4, 6);
    let w = TensorValue::matrix(n_in, n_hidden, draw(n_in * n_hidden));
    let b = TensorValue::vector(draw(n_hidden));
    let v = TensorValue::vector(draw(n_hidden));
    let x = TensorValue::vector(draw(n_in));

    let mut tape = Tape::new();
    let input = tape.input(&[n_in]);
    let w = tape.constant(w);
    let b = tape.constant(b);
    let v = tape.constant(v);
    let pre = tape.matmul(input, w).expect("shapes");
    let pre = tape.add(pre, b).expect("shapes");
    let h = tape.tanh(pre);
    let target = tape.dot(h, v).expect("shapes");
    PathFixture {
        tape,
        target,
        input: vec![x],
        baseline: vec![TensorValue::zeros(&[n_in])],
    }
}

fn color_question(words: &str, answer: &str, id: usize) -> Instance {
    let q = Instance::tokenize(words);
    let subject = q.len() - 1;
    let mut inst = Instance::new(format!("fx-{id:03}"), q, Answer::label(answer));
    inst.subject_span = Some((subject, subject + 1));
    inst
}

const FIXTURE_OBJECTS: [&str; 6] = ["dog", "car", "kite", "hat", "bus", "cup"];

/// Forty questions: twenty "what color is the X" (mostly white) and twenty
/// "how many Xs" (mostly two).
pub fn color_corpus() -> Dataset {
    let mut instances = Vec::new();
    for i in 0..20 {
        let obj = FIXTURE_OBJECTS[i % FIXTURE_OBJECTS.len()];
        let color = if i % 10 < 7 { "white" } else { "red" };
        instances.push(color_question(&format!("what color is the {obj}"), color, instances.len()));
        let count = if i % 10 < 6 { "two" } else { "three" };
        instances.push(color_question(&format!("how many {obj}"), count, instances.len()));
    }
    Dataset {
        vocab: build_vocab(&instances),
        instances,
        provenance: Provenance::Derived {
            note: "color fixture corpus".into(),
        },
    }
}

/// Class order used by the color fixtures.
pub fn color_classes() -> Vec<String> {
    ["two", "white", "red", "three"].iter().map(|s| s.to_string()).collect()
}

/// A classifier that reads only the token "color": its embedding row is the
/// only nonzero one and it points at class "white". Without "color" the
/// logits tie and class 0 ("two") is predicted.
pub fn color_only_classifier(vocab: &Vocabulary) -> ClassifierModel {
    let mut m = ClassifierModel::zeros(vocab.clone(), color_classes(), 4);
    if vocab.contains("color") {
        let id = vocab.id("color");
        m.embedding.row_mut(id)[0] = 1.0;
    }
    m.output.row_mut(0)[1] = 4.0;
    m
}

/// A classifier keyed on the subject (last) token of [`color_corpus`]
/// questions: each object maps to its own answer; unknown tokens fall back
/// to class 0, which is never a gold answer there.
pub fn subject_keyed_classifier(vocab: &Vocabulary) -> ClassifierModel {
    let mut classes = vec!["none".to_string()];
    classes.extend(color_classes());
    let d = FIXTURE_OBJECTS.len();
    let mut m = ClassifierModel::zeros(vocab.clone(), classes, d);
    let corpus = color_corpus();
    for (k, obj) in FIXTURE_OBJECTS.iter().enumerate() {
        if !vocab.contains(obj) {
            continue;
        }
        let id = vocab.id(obj);
        m.embedding.row_mut(id)[k] = 1.0;
        // first gold answer seen for this object
        let first = corpus
            .instances
            .iter()
            .find(|i| i.question.last().map(String::as_str) == Some(*obj))
            .map(|i| i.gold_answer.canonical()[0].clone())
            .expect("object in corpus");
        let class = m.classes.iter().position(|c| *c == first).expect("class");
        m.output.row_mut(k)[class] = 10.0;
    }
    m
}

/// Two classifiers sharing one random embedding table, for linearity
/// checks.
pub fn linearity_pair(vocab: &Vocabulary) -> (ClassifierModel, ClassifierModel) {
    let f1 = ClassifierModel::random(vocab.clone(), color_classes(), 4, 1);
    let mut f2 = ClassifierModel::random(vocab.clone(), color_classes(), 4, 2);
    f2.embedding = f1.embedding.clone();
    (f1, f2)
}

/// Embedding layout of the planted-bias table model.
mod dims {
    pub const MOST: usize = 0;
    pub const LEAST: usize = 1;
    pub const AT: usize = 2;
    pub const OF: usize = 3;
    pub const MANY: usize = 4;
    pub const NOT: usize = 5;
    pub const GOLD: usize = 6;
    pub const ENTITY: usize = 14;
    pub const ALWAYS: usize = 15;
    pub const DIM: usize = 16;
}

/// Phrase tokens the planted-bias model should know about even when the
/// corpus does not contain them.
pub const ATTACK_TOKENS: [&str; 6] = ["in", "not", "a", "lot", "of", "words"];

/// Evaluation corpus for the planted-bias model: max, min, count, lookup
/// and threshold questions over tables without total rows.
pub fn planted_corpus(seed: u64) -> Dataset {
    let cfg = GenConfig {
        seed,
        counts: TemplateCounts {
            max: 20,
            min: 20,
            count: 20,
            lookup: 20,
            first: 0,
            last: 0,
            geq: 20,
        },
        total_row_fraction: 0.0,
        ..GenConfig::default()
    };
    let mut d = generate_synthetic(&cfg).expect("valid fixture config");
    for t in ATTACK_TOKENS {
        d.vocab.insert(t);
    }
    d
}

/// Table model whose operator choices hinge on single trigger words:
/// "most" → max, "least"/"fewest" → min, "at" → geq, "of" → word_match,
/// "not" → next (all at the third step) and "many" → count at the last
/// step. The third-step column follows the column-name prior; the last-step
/// column is the entity column unless "of" is present, in which case the
/// named column is printed.
///
/// It answers every question of [`planted_corpus`] correctly, yet deleting
/// the stop word "of" or prefixing a phrase containing "not" breaks it.
pub fn planted_table_model(vocab: &Vocabulary) -> TableQaModel {
    use dims::*;
    let mut m = TableQaModel::zeros(vocab.clone(), DIM);
    let trigger = |t: &str| match t {
        "most" => Some(MOST),
        "least" | "fewest" => Some(LEAST),
        "at" => Some(AT),
        "of" => Some(OF),
        "many" => Some(MANY),
        "not" => Some(NOT),
        "gold" => Some(GOLD),
        _ => None,
    };
    for (id, tok) in vocab.tokens().iter().enumerate() {
        if id == PAD {
            continue;
        }
        let row = m.embedding.row_mut(id);
        if let Some(dim) = trigger(tok) {
            row[dim] = 1.0;
        }
        if matches!(tok.as_str(), "nation" | "team" | "player") {
            row[ENTITY] = 1.0;
        }
        if tok != "of" {
            row[ALWAYS] = 1.0;
        }
        if tok == TM_TOKEN || tok == CM_TOKEN {
            row[ALWAYS] = 1.0;
        }
    }
    let op = |o: Operator| o.ordinal();
    for s in &mut m.steps {
        s.op_bias.data_mut()[op(Operator::ResetSelect)] = 0.5;
    }
    let s2 = &mut m.steps[2];
    s2.op_weight.row_mut(MOST)[op(Operator::Max)] = 100.0;
    s2.op_weight.row_mut(LEAST)[op(Operator::Min)] = 100.0;
    s2.op_weight.row_mut(AT)[op(Operator::Geq)] = 300.0;
    s2.op_weight.row_mut(OF)[op(Operator::WordMatch)] = 100.0;
    s2.op_weight.row_mut(NOT)[op(Operator::Next)] = 400.0;
    s2.prior_weight = TensorValue::scalar(50.0);
    // the entity column is never the argument of a superlative
    s2.col_transform.row_mut(ENTITY)[ALWAYS] = -30.0;

    let s3 = &mut m.steps[3];
    s3.op_bias.data_mut()[op(Operator::ResetSelect)] = 0.0;
    s3.op_bias.data_mut()[op(Operator::Print)] = 1.0;
    s3.op_weight.row_mut(MANY)[op(Operator::Count)] = 100.0;
    // attend sharply to "of" when present; otherwise the mean carries ALWAYS
    s3.query.data_mut()[OF] = 50.0;
    s3.col_transform.row_mut(ENTITY)[ALWAYS] = 30.0;
    s3.prior_weight = TensorValue::scalar(30.0);
    m
}

/// [`planted_table_model`] plus a table bias: a column named "gold" pushes
/// the second step to prev, which drops the last row.
pub fn medal_prev_model(vocab: &Vocabulary) -> TableQaModel {
    let mut m = planted_table_model(vocab);
    let d = dims::DIM;
    m.steps[1].op_weight.row_mut(d + dims::GOLD)[Operator::Prev.ordinal()] = 100.0;
    m
}

/// Max/min questions over tables without total rows, a third of them medal
/// tables.
pub fn medal_corpus(seed: u64) -> Dataset {
    let cfg = GenConfig {
        seed,
        counts: TemplateCounts {
            max: 30,
            min: 30,
            count: 0,
            lookup: 0,
            first: 0,
            last: 0,
            geq: 0,
        },
        total_row_fraction: 0.0,
        ..GenConfig::default()
    };
    generate_synthetic(&cfg).expect("valid fixture config")
}
