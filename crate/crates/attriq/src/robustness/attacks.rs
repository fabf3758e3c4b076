use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{Instance, Model, Prediction};
use crate::tableexec::{execute, Answer, Table};

use super::{fraction, predict_all, RobustnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Prefix,
    Suffix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReorderMode {
    /// Seeded permutation of every row but the last.
    Shuffle,
    AnswerFirst,
    AnswerLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub id: String,
    pub question: Vec<String>,
    pub original: Option<Answer>,
    pub attacked: Option<Answer>,
    pub gold: Answer,
    pub original_correct: bool,
    pub attacked_correct: bool,
    /// Originally correct and wrong after the attack.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    /// Phrase, mode or seed, depending on the attack.
    pub detail: String,
    pub records: Vec<AttackRecord>,
    pub baseline_accuracy: f64,
    pub attacked_accuracy: f64,
    /// Originally correct instances still correct, over originally correct.
    pub retention: Option<f64>,
    /// Instances excluded or skipped before evaluation.
    pub skipped: usize,
    /// Gold programs re-executed on the perturbed input, and how many of
    /// them disagreed with the gold answer.
    pub gold_checks: usize,
    pub gold_failures: usize,
}

impl AttackResult {
    pub fn evaluated(&self) -> usize {
        self.records.len()
    }
}

fn answer_of(p: &Prediction, model: &Model) -> Option<Answer> {
    match (&p.answer, p.class, model) {
        (Some(a), _, _) => Some(a.clone()),
        (None, Some(c), Model::Classifier(m)) => Some(Answer::label(m.classes[c].clone())),
        _ => None,
    }
}

/// Re-executes the gold program of `attacked` (if it has one) and reports
/// whether it still yields the gold answer.
fn gold_check(attacked: &Instance) -> Option<bool> {
    let (program, table) = (attacked.gold_program.as_ref()?, attacked.table.as_ref()?);
    Some(
        execute(program, table, &attacked.question)
            .map(|a| a.matches(&attacked.gold_answer))
            .unwrap_or(false),
    )
}

fn run(
    model: &Model,
    name: &str,
    position: Option<Position>,
    detail: String,
    originals: &[Instance],
    attacked: &[Instance],
    skipped: usize,
) -> Result<AttackResult, RobustnessError> {
    let before = predict_all(model, originals)?;
    let after = predict_all(model, attacked)?;
    let checks: Vec<bool> = attacked.par_iter().filter_map(gold_check).collect();
    let records: Vec<AttackRecord> = originals
        .iter()
        .zip(attacked)
        .zip(before.iter().zip(&after))
        .map(|((o, a), (pb, pa))| {
            let original_correct = pb.is_correct(&o.gold_answer);
            let attacked_correct = pa.is_correct(&a.gold_answer);
            AttackRecord {
                id: o.id.clone(),
                question: a.question.clone(),
                original: answer_of(pb, model),
                attacked: answer_of(pa, model),
                gold: a.gold_answer.clone(),
                original_correct,
                attacked_correct,
                success: original_correct && !attacked_correct,
            }
        })
        .collect();
    let n = records.len();
    let orig = records.iter().filter(|r| r.original_correct).count();
    let kept = records.iter().filter(|r| r.original_correct && r.attacked_correct).count();
    Ok(AttackResult {
        attack: name.to_string(),
        position,
        detail,
        baseline_accuracy: fraction(orig, n),
        attacked_accuracy: fraction(records.iter().filter(|r| r.attacked_correct).count(), n),
        retention: (orig > 0).then(|| kept as f64 / orig as f64),
        records,
        skipped,
        gold_checks: checks.len(),
        gold_failures: checks.iter().filter(|ok| !**ok).count(),
    })
}

/// Attaches `phrase` before or after every question; tables and gold
/// answers are untouched and match tokens are recomputed by the model.
pub fn concat_attack(
    model: &Model,
    instances: &[Instance],
    phrase: &[String],
    position: Position,
) -> Result<AttackResult, RobustnessError> {
    if phrase.is_empty() {
        return Err(RobustnessError::EmptyPhrase);
    }
    let attacked: Vec<Instance> = instances
        .iter()
        .map(|i| {
            let q = match position {
                Position::Prefix => [phrase, &i.question[..]].concat(),
                Position::Suffix => [&i.question[..], phrase].concat(),
            };
            i.with_question(q)
        })
        .collect();
    run(model, "concat", Some(position), phrase.join(" "), instances, &attacked, 0)
}

/// Deletes every stop word from every question.
pub fn stopword_deletion_attack(
    model: &Model,
    instances: &[Instance],
    stopwords: &[String],
) -> Result<AttackResult, RobustnessError> {
    let stop: HashSet<&str> = stopwords.iter().map(String::as_str).collect();
    let attacked: Vec<Instance> = instances
        .iter()
        .map(|i| {
            i.with_question(
                i.question
                    .iter()
                    .filter(|t| !stop.contains(t.as_str()))
                    .cloned()
                    .collect(),
            )
        })
        .collect();
    run(
        model,
        "stopword_deletion",
        None,
        format!("{} stop words", stop.len()),
        instances,
        &attacked,
        0,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectAblation {
    /// `(noun, rate)`: among originally correct instances, the fraction
    /// whose answer is unchanged with the subject replaced by `noun`.
    pub per_noun: Vec<(String, Option<f64>)>,
    /// Mean of the defined per-noun rates.
    pub mean_rate: Option<f64>,
    /// Originally correct instances with a subject span.
    pub evaluated: usize,
    /// Instances without a subject span.
    pub skipped: usize,
}

/// Replaces the subject span of each question by each noun in turn.
pub fn subject_ablation_attack(
    model: &Model,
    instances: &[Instance],
    nouns: &[String],
) -> Result<SubjectAblation, RobustnessError> {
    let with_span: Vec<&Instance> = instances.iter().filter(|i| i.subject_span.is_some()).collect();
    let skipped = instances.len() - with_span.len();
    let originals: Vec<Instance> = with_span.iter().map(|i| (*i).clone()).collect();
    let before = predict_all(model, &originals)?;
    let correct: Vec<(&Instance, Option<Answer>)> = originals
        .iter()
        .zip(&before)
        .filter(|(i, p)| p.is_correct(&i.gold_answer))
        .map(|(i, p)| (i, answer_of(p, model)))
        .collect();
    let mut per_noun = Vec::with_capacity(nouns.len());
    for noun in nouns {
        let attacked: Vec<Instance> = correct
            .iter()
            .map(|(i, _)| {
                let (s, e) = i.subject_span.expect("filtered");
                let q = [&i.question[..s], std::slice::from_ref(noun), &i.question[e..]].concat();
                i.with_question(q)
            })
            .collect();
        let after = predict_all(model, &attacked)?;
        let same = correct
            .iter()
            .zip(&after)
            .filter(|((_, orig), p)| match (orig, answer_of(p, model)) {
                (Some(a), Some(b)) => a.matches(&b),
                _ => false,
            })
            .count();
        per_noun.push((noun.clone(), (!correct.is_empty()).then(|| fraction(same, correct.len()))));
    }
    let defined: Vec<f64> = per_noun.iter().filter_map(|(_, r)| *r).collect();
    Ok(SubjectAblation {
        mean_rate: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        per_noun,
        evaluated: correct.len(),
        skipped,
    })
}

fn is_total_row(table: &Table, row: usize) -> bool {
    table.rows()[row]
        .first()
        .is_some_and(|c| c.text().eq_ignore_ascii_case("total"))
}

/// The single row containing the gold answer's only cell, if there is one.
fn answer_row(table: &Table, gold: &Answer) -> Option<usize> {
    let canon = gold.canonical();
    let [target] = canon.as_slice() else {
        return None;
    };
    let rows: Vec<usize> = (0..table.num_rows())
        .filter(|&r| table.rows()[r].iter().any(|c| c.text() == *target))
        .collect();
    match rows.as_slice() {
        [r] => Some(*r),
        _ => None,
    }
}

/// New row order for `table`; `None` when the answer row cannot be found.
fn reorder(table: &Table, gold: &Answer, mode: ReorderMode, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let n = table.num_rows();
    if n == 0 {
        return Some(Vec::new());
    }
    match mode {
        ReorderMode::Shuffle => {
            let mut order: Vec<usize> = (0..n - 1).collect();
            order.shuffle(rng);
            order.push(n - 1);
            Some(order)
        }
        ReorderMode::AnswerFirst | ReorderMode::AnswerLast => {
            let r = answer_row(table, gold)?;
            // a trailing total row stays last
            let pinned = n > 1 && is_total_row(table, n - 1) && r != n - 1;
            let end = if pinned { n - 1 } else { n };
            let mut rest: Vec<usize> = (0..end).filter(|&i| i != r).collect();
            if mode == ReorderMode::AnswerFirst {
                rest.insert(0, r);
            } else {
                rest.push(r);
            }
            if pinned {
                rest.push(n - 1);
            }
            Some(rest)
        }
    }
}

/// Reorders table rows, which never changes the gold answer. Questions
/// that are order sensitive or contain an order word are excluded; answer
/// modes skip instances whose answer row cannot be located.
pub fn row_reorder_attack(
    model: &Model,
    instances: &[Instance],
    mode: ReorderMode,
    seed: u64,
    order_words: &[String],
) -> Result<AttackResult, RobustnessError> {
    let order: HashSet<&str> = order_words.iter().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut originals = Vec::new();
    let mut attacked = Vec::new();
    let mut skipped = 0;
    for inst in instances {
        let Some(table) = inst.table.as_ref() else {
            skipped += 1;
            continue;
        };
        if inst.order_sensitive || inst.question.iter().any(|t| order.contains(t.as_str())) {
            skipped += 1;
            continue;
        }
        let Some(perm) = reorder(table, &inst.gold_answer, mode, &mut rng) else {
            skipped += 1;
            continue;
        };
        let mut a = inst.clone();
        a.table = Some(table.permuted(&perm));
        originals.push(inst.clone());
        attacked.push(a);
    }
    let mode_name = serde_json::to_value(mode)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    run(
        model,
        "row_reorder",
        None,
        format!("{mode_name} seed {seed}"),
        &originals,
        &attacked,
        skipped,
    )
}

/// Accuracy when an instance counts as correct only if it is correct under
/// every attack. All results must cover the same instances in the same
/// order.
pub fn union_accuracy(results: &[AttackResult]) -> Result<f64, RobustnessError> {
    let Some(first) = results.first() else {
        return Ok(0.0);
    };
    let ids: Vec<&str> = first.records.iter().map(|r| r.id.as_str()).collect();
    if results
        .iter()
        .any(|r| r.records.len() != ids.len() || r.records.iter().zip(&ids).any(|(a, b)| a.id != *b))
    {
        return Err(RobustnessError::MismatchedResults);
    }
    let correct = (0..ids.len())
        .filter(|&i| results.iter().all(|r| r.records[i].attacked_correct))
        .count();
    Ok(fraction(correct, ids.len()))
}

/// `attack,position,baseline_acc,attacked_acc,n` rows, one per result.
pub fn summary_csv(results: &[AttackResult]) -> Result<String, RobustnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["attack", "position", "baseline_acc", "attacked_acc", "n"])?;
    for r in results {
        let position = match r.position {
            Some(Position::Prefix) => "prefix",
            Some(Position::Suffix) => "suffix",
            None => "",
        };
        let name = if r.detail.is_empty() {
            r.attack.clone()
        } else {
            format!("{}: {}", r.attack, r.detail)
        };
        w.write_record([
            name,
            position.to_string(),
            r.baseline_accuracy.to_string(),
            r.attacked_accuracy.to_string(),
            r.evaluated().to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("utf-8"))
}
