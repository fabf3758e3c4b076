use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionReport;
use crate::datasets::Dataset;
use crate::models::{Instance, Model, CM_TOKEN, PAD_TOKEN, TM_TOKEN, UNK_TOKEN};

use super::{fraction, predict_all, RobustnessError};

fn is_reserved(t: &str) -> bool {
    matches!(t, PAD_TOKEN | UNK_TOKEN | TM_TOKEN | CM_TOKEN)
}

/// Positions of the `k` highest token scalars, ties to the lower position.
pub(crate) fn top_positions(report: &AttributionReport, k: usize, skip: impl Fn(&str) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..report.tokens.len())
        .filter(|&i| !skip(&report.tokens[i]))
        .collect();
    // stable sort keeps lower positions first among equal scores
    idx.sort_by(|&a, &b| report.token_scores[b].total_cmp(&report.token_scores[a]));
    idx.truncate(k);
    idx
}

/// Question words ranked by how often they are among the top-`top_k`
/// attributed tokens of a report; ties keep first-occurrence order.
/// Omitted reports and reserved tokens are skipped.
pub fn top_attributed_vocab(reports: &[AttributionReport], top_k: usize) -> Result<Vec<String>, RobustnessError> {
    let mut ranked: Vec<(String, usize)> = Vec::new();
    let mut used = 0;
    for r in reports.iter().filter(|r| !r.omitted) {
        used += 1;
        let mut seen = HashSet::new();
        for i in top_positions(r, top_k, is_reserved) {
            let tok = &r.tokens[i];
            if !seen.insert(tok.clone()) {
                continue;
            }
            match ranked.iter_mut().find(|(t, _)| t == tok) {
                Some(e) => e.1 += 1,
                None => ranked.push((tok.clone(), 1)),
            }
        }
    }
    if used == 0 {
        return Err(RobustnessError::AllOmitted);
    }
    // stable: equal counts stay in first-occurrence order
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    Ok(ranked.into_iter().map(|(t, _)| t).collect())
}

/// `ranked` followed by every other question word of `dataset` in first
/// occurrence order, so that the largest size keeps every question intact.
pub fn full_ranking(ranked: &[String], dataset: &Dataset) -> Vec<String> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut out = Vec::new();
    let words = ranked
        .iter()
        .chain(dataset.instances.iter().flat_map(|i| i.question.iter()));
    for w in words {
        if !is_reserved(w) && seen.insert(w) {
            out.push(w.clone());
        }
    }
    out
}

/// Every token outside `keep` becomes PAD.
pub fn restrict_question(question: &[String], keep: &HashSet<&str>) -> Vec<String> {
    question
        .iter()
        .map(|t| {
            if keep.contains(t.as_str()) {
                t.clone()
            } else {
                PAD_TOKEN.to_string()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub accuracy: f64,
    /// `accuracy` over the unrestricted accuracy; absent when that is zero.
    pub relative_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverstabilityCurve {
    pub ranked_vocab: Vec<String>,
    pub points: Vec<CurvePoint>,
    pub full_accuracy: f64,
}

impl OverstabilityCurve {
    /// `size,accuracy,relative_accuracy` rows.
    pub fn to_csv(&self) -> Result<String, RobustnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["size", "accuracy", "relative_accuracy"])?;
        for p in &self.points {
            w.write_record([
                p.size.to_string(),
                p.accuracy.to_string(),
                p.relative_accuracy.map(|r| r.to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("utf-8"))
    }
}

/// Accuracy over the whole dataset when only the first `k` words of the
/// full ranking (see [`full_ranking`]) are kept, for each `k` in `sizes`.
/// `sizes` must be strictly increasing, start at 0 and end at the ranking
/// length.
pub fn overstability_curve(
    model: &Model,
    dataset: &Dataset,
    ranked: &[String],
    sizes: &[usize],
) -> Result<OverstabilityCurve, RobustnessError> {
    let ranking = full_ranking(ranked, dataset);
    if sizes.first() != Some(&0) || sizes.last() != Some(&ranking.len()) {
        return Err(RobustnessError::InvalidSizes(format!(
            "must start at 0 and end at {}",
            ranking.len()
        )));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RobustnessError::InvalidSizes("must be strictly increasing".into()));
    }
    let eval = |k: usize| -> Result<f64, RobustnessError> {
        let keep: HashSet<&str> = ranking[..k].iter().map(String::as_str).collect();
        let restricted: Vec<Instance> = dataset
            .instances
            .iter()
            .map(|i| i.with_question(restrict_question(&i.question, &keep)))
            .collect();
        let preds = predict_all(model, &restricted)?;
        let correct = preds
            .iter()
            .zip(&restricted)
            .filter(|(p, i)| p.is_correct(&i.gold_answer))
            .count();
        Ok(fraction(correct, restricted.len()))
    };
    let accs = sizes.iter().map(|&k| eval(k)).collect::<Result<Vec<_>, _>>()?;
    let full_accuracy = *accs.last().expect("nonempty sizes");
    let points = sizes
        .iter()
        .zip(accs)
        .map(|(&size, accuracy)| CurvePoint {
            size,
            accuracy,
            relative_accuracy: (full_accuracy > 0.0).then(|| accuracy / full_accuracy),
        })
        .collect();
    Ok(OverstabilityCurve {
        ranked_vocab: ranking,
        points,
        full_accuracy,
    })
}
