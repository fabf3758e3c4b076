use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::attribution::{column_name_attribution, AttributionReport, IGConfig, TargetSelector};
use crate::models::{Instance, TableQaModel, PAD_TOKEN};
use crate::models::STEPS as STEPS_LEN;
use crate::tableexec::{Operator, Program};

use super::overstability::top_positions;
use super::RobustnessError;

/// The highest-scalar non-PAD token of a report, ties to the lower
/// position.
pub fn top_token(report: &AttributionReport) -> Option<&str> {
    top_positions(report, 1, |t| t == PAD_TOKEN)
        .first()
        .map(|&i| report.tokens[i].as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultProgramGroup {
    pub program: Program,
    /// Ids of the instances whose table yields this program.
    pub instances: Vec<String>,
    /// Column names by mean attribution (over the tables carrying the
    /// name), summed over all selections of the program; descending.
    pub ranking: Vec<(String, f64)>,
    /// The same ranking for each selection: operators of steps 0..T, then
    /// columns of steps 0..T.
    pub per_selection: Vec<Vec<(String, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultProgramAnalysis {
    pub groups: Vec<DefaultProgramGroup>,
    /// Fraction of operator selections of the instances' own programs that
    /// equal the operator of their table's default program.
    pub operator_match_rate: f64,
}

fn rank(sums: Vec<(String, f64, usize)>) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = sums.into_iter().map(|(n, s, c)| (n, s / c as f64)).collect();
    // stable: ties keep first-seen order
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v
}

fn accumulate(acc: &mut Vec<(String, f64, usize)>, names: &[String], scores: &[f64]) {
    for (n, &s) in names.iter().zip(scores) {
        match acc.iter_mut().find(|(m, _, _)| m == n) {
            Some(e) => {
                e.1 += s;
                e.2 += 1;
            }
            None => acc.push((n.clone(), s, 1)),
        }
    }
}

/// Groups instances by the program the model selects for an empty question
/// over their table, ranks column names by their attribution within each
/// group, and measures how often per-instance operators equal the default.
pub fn default_program_analysis(
    model: &TableQaModel,
    instances: &[Instance],
    cfg: &IGConfig,
) -> Result<DefaultProgramAnalysis, RobustnessError> {
    let with_tables: Vec<&Instance> = instances.iter().filter(|i| i.table.is_some()).collect();
    if with_tables.is_empty() {
        return Err(RobustnessError::NoTables);
    }
    struct Acc {
        program: Program,
        instances: Vec<String>,
        total: Vec<(String, f64, usize)>,
        per: Vec<Vec<(String, f64, usize)>>,
    }
    let mut groups: Vec<Acc> = Vec::new();
    let mut matches = 0;
    for inst in &with_tables {
        let table = inst.table.as_ref().expect("filtered");
        let default = model.predict(&[], table)?.program;
        let own = model.predict(&inst.question, table)?.program;
        matches += own
            .operators()
            .iter()
            .zip(default.operators())
            .filter(|(a, b)| **a == *b)
            .count();

        let targets = default
            .steps()
            .iter()
            .enumerate()
            .map(|(step, s)| TargetSelector::Operator { step, op: s.op })
            .chain(
                default
                    .steps()
                    .iter()
                    .enumerate()
                    .map(|(step, s)| TargetSelector::Column { step, column: s.column }),
            );
        let scores: Vec<Vec<f64>> = targets
            .map(|t| column_name_attribution(model, table, t, cfg).map(|r| r.column_name_scores))
            .collect::<Result<_, _>>()?;
        let g = match groups.iter().position(|g| g.program == default) {
            Some(i) => &mut groups[i],
            None => {
                groups.push(Acc {
                    program: default,
                    instances: Vec::new(),
                    total: Vec::new(),
                    per: vec![Vec::new(); 2 * STEPS_LEN],
                });
                groups.last_mut().expect("pushed")
            }
        };
        g.instances.push(inst.id.clone());
        let total: Vec<f64> = (0..table.num_columns())
            .map(|c| scores.iter().map(|s| s[c]).sum())
            .collect();
        accumulate(&mut g.total, table.columns(), &total);
        for (p, s) in g.per.iter_mut().zip(&scores) {
            accumulate(p, table.columns(), s);
        }
    }
    Ok(DefaultProgramAnalysis {
        groups: groups
            .into_iter()
            .map(|g| DefaultProgramGroup {
                program: g.program,
                instances: g.instances,
                ranking: rank(g.total),
                per_selection: g.per.into_iter().map(rank).collect(),
            })
            .collect(),
        operator_match_rate: matches as f64 / (with_tables.len() * STEPS_LEN) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerRow {
    pub operator: Operator,
    /// `(token, times top-attributed)`, descending; ties in first-seen
    /// order.
    pub triggers: Vec<(String, usize)>,
}

/// One row per operator, in ordinal order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerTable {
    pub rows: Vec<TriggerRow>,
}

impl TriggerTable {
    pub fn triggers(&self, op: Operator) -> &[(String, usize)] {
        &self.rows[op.ordinal()].triggers
    }
}

/// Counts, per selected operator, the top-attributed token of each
/// non-omitted operator-target report.
pub fn operator_trigger_table(reports: &[AttributionReport]) -> TriggerTable {
    let mut rows: Vec<TriggerRow> = Operator::ALL
        .iter()
        .map(|&operator| TriggerRow {
            operator,
            triggers: Vec::new(),
        })
        .collect();
    for r in reports.iter().filter(|r| !r.omitted) {
        let TargetSelector::Operator { op, .. } = r.target else {
            continue;
        };
        let Some(tok) = top_token(r) else { continue };
        let t = &mut rows[op.ordinal()].triggers;
        match t.iter_mut().find(|(x, _)| x == tok) {
            Some(e) => e.1 += 1,
            None => t.push((tok.to_string(), 1)),
        }
    }
    for r in &mut rows {
        r.triggers.sort_by(|a, b| b.1.cmp(&a.1));
    }
    TriggerTable { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyRecord {
    pub question: Vec<String>,
    pub attack_sentence: Vec<String>,
    pub success: bool,
    /// One scalar per question token.
    pub attributions: Vec<f64>,
    pub pos_tags: Vec<String>,
}

/// A token has high attribution when its scalar (or its magnitude, with
/// `absolute`) is at least `fraction` of the question's maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdPolicy {
    pub fraction: f64,
    pub absolute: bool,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            fraction: 0.5,
            absolute: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacySplit {
    /// Records with a high-attribution noun or adjective missing from the
    /// attack sentence.
    pub group1: usize,
    pub group1_failures: usize,
    pub group1_failure_rate: Option<f64>,
    pub group2: usize,
    pub group2_failures: usize,
    pub group2_failure_rate: Option<f64>,
}

fn is_noun_or_adjective(tag: &str) -> bool {
    matches!(tag, "NOUN" | "PROPN" | "ADJ") || tag.starts_with("NN") || tag.starts_with("JJ")
}

fn high_tokens<'a>(r: &'a EfficacyRecord, policy: ThresholdPolicy) -> impl Iterator<Item = usize> + 'a {
    let key = move |v: f64| if policy.absolute { v.abs() } else { v };
    let max = r.attributions.iter().map(|&v| key(v)).fold(f64::NEG_INFINITY, f64::max);
    (0..r.question.len()).filter(move |&i| {
        let v = key(r.attributions[i]);
        max > 0.0 && v >= policy.fraction * max
    })
}

/// Splits records by whether a high-attribution noun or adjective of the
/// question is absent from the attack sentence and reports the fraction of
/// failed attacks in each group.
pub fn attack_efficacy_split(
    records: &[EfficacyRecord],
    policy: ThresholdPolicy,
) -> Result<EfficacySplit, RobustnessError> {
    let (mut g1, mut f1, mut g2, mut f2) = (0, 0, 0, 0);
    for (index, r) in records.iter().enumerate() {
        if r.pos_tags.len() != r.question.len() || r.attributions.len() != r.question.len() {
            return Err(RobustnessError::InvalidRecord {
                index,
                message: "pos tags and attributions must align with the question".into(),
            });
        }
        let attack: HashSet<&str> = r.attack_sentence.iter().map(String::as_str).collect();
        let group1 = high_tokens(r, policy)
            .any(|i| is_noun_or_adjective(&r.pos_tags[i]) && !attack.contains(r.question[i].as_str()));
        let failed = !r.success as usize;
        if group1 {
            g1 += 1;
            f1 += failed;
        } else {
            g2 += 1;
            f2 += failed;
        }
    }
    let rate = |f: usize, n: usize| (n > 0).then(|| f as f64 / n as f64);
    Ok(EfficacySplit {
        group1: g1,
        group1_failures: f1,
        group1_failure_rate: rate(f1, g1),
        group2: g2,
        group2_failures: f2,
        group2_failure_rate: rate(f2, g2),
    })
}
