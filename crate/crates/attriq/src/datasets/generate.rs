use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::models::Instance;
use crate::tableexec::{execute, Answer, Cell, Operator, Program, Table};

use super::{build_vocab, Dataset, DatasetError, Provenance};

/// Number of questions drawn from each template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateCounts {
    pub max: usize,
    pub min: usize,
    pub count: usize,
    pub lookup: usize,
    pub first: usize,
    pub last: usize,
    pub geq: usize,
}

impl Default for TemplateCounts {
    fn default() -> Self {
        Self {
            max: 60,
            min: 60,
            count: 40,
            lookup: 60,
            first: 20,
            last: 20,
            geq: 40,
        }
    }
}

impl TemplateCounts {
    pub fn only(template: Template, n: usize) -> Self {
        let mut c = Self {
            max: 0,
            min: 0,
            count: 0,
            lookup: 0,
            first: 0,
            last: 0,
            geq: 0,
        };
        *c.slot(template) = n;
        c
    }

    fn slot(&mut self, t: Template) -> &mut usize {
        match t {
            Template::Max => &mut self.max,
            Template::Min => &mut self.min,
            Template::Count => &mut self.count,
            Template::Lookup => &mut self.lookup,
            Template::First => &mut self.first,
            Template::Last => &mut self.last,
            Template::Geq => &mut self.geq,
        }
    }

    fn get(&self, t: Template) -> usize {
        match t {
            Template::Max => self.max,
            Template::Min => self.min,
            Template::Count => self.count,
            Template::Lookup => self.lookup,
            Template::First => self.first,
            Template::Last => self.last,
            Template::Geq => self.geq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Max,
    Min,
    Count,
    Lookup,
    First,
    Last,
    Geq,
}

impl Template {
    pub const ALL: [Template; 7] = [
        Template::Max,
        Template::Min,
        Template::Count,
        Template::Lookup,
        Template::First,
        Template::Last,
        Template::Geq,
    ];
}

/// Synthetic table-QA corpus configuration. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub counts: TemplateCounts,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    pub values: (i64, i64),
    /// Probability that a table ends with a "total" row (always a medal
    /// table).
    pub total_row_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            counts: TemplateCounts::default(),
            rows: (3, 8),
            cols: (2, 4),
            values: (0, 30),
            total_row_fraction: 0.3,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::Config(m.to_string()));
        if self.rows.0 < 3 || self.rows.0 > self.rows.1 || self.rows.1 > ENTITIES_PER_KIND {
            return bad("rows range must lie within [3, 12] and be nonempty");
        }
        if self.cols.0 < 2 || self.cols.0 > self.cols.1 || self.cols.1 > 4 {
            return bad("cols range must lie within [2, 4] and be nonempty");
        }
        if self.values.0 > self.values.1 || self.values.0 < 0 {
            return bad("values range must be nonempty and nonnegative");
        }
        if !(0.0..=1.0).contains(&self.total_row_fraction) {
            return bad("total_row_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

const ENTITIES_PER_KIND: usize = 12;

struct Kind {
    noun: &'static str,
    plural: &'static str,
    entities: [&'static str; ENTITIES_PER_KIND],
    columns: [&'static str; 3],
}

const NATION: Kind = Kind {
    noun: "nation",
    plural: "nations",
    entities: [
        "france", "italy", "spain", "germany", "japan", "china", "kenya", "brazil", "canada", "norway",
        "egypt", "chile",
    ],
    columns: ["gold", "silver", "bronze"],
};

const KINDS: [Kind; 3] = [
    NATION,
    Kind {
        noun: "team",
        plural: "teams",
        entities: [
            "lions", "tigers", "eagles", "sharks", "wolves", "bears", "hawks", "bulls", "rams", "jets",
            "kings", "owls",
        ],
        columns: ["points", "wins", "losses"],
    },
    Kind {
        noun: "player",
        plural: "players",
        entities: [
            "smith", "jones", "brown", "garcia", "silva", "kim", "chen", "novak", "rossi", "muller",
            "sato", "lopez",
        ],
        columns: ["goals", "assists", "games"],
    },
];

struct Generated {
    table: Table,
    kind: &'static Kind,
    has_total: bool,
    /// Numeric values per data row (excluding the total row), by column.
    values: Vec<Vec<f64>>,
    names: Vec<&'static str>,
}

fn gen_table(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Generated {
    let has_total = rng.random_bool(cfg.total_row_fraction);
    let kind = if has_total { &KINDS[0] } else { &KINDS[rng.random_range(0..KINDS.len())] };
    let n = rng.random_range(cfg.rows.0..=cfg.rows.1);
    let c = rng.random_range(cfg.cols.0..=cfg.cols.1);
    let names: Vec<&'static str> = kind.entities.choose_multiple(rng, n).copied().collect();
    let mut columns = vec![kind.noun.to_string()];
    columns.extend(kind.columns[..c - 1].iter().map(|s| s.to_string()));
    let values: Vec<Vec<f64>> = (1..c)
        .map(|_| (0..n).map(|_| rng.random_range(cfg.values.0..=cfg.values.1) as f64).collect())
        .collect();
    let mut rows: Vec<Vec<Cell>> = (0..n)
        .map(|r| {
            let mut row = vec![Cell::Text(names[r].to_string())];
            row.extend(values.iter().map(|col| Cell::Number(col[r])));
            row
        })
        .collect();
    if has_total {
        let mut row = vec![Cell::Text("total".into())];
        row.extend(values.iter().map(|col| Cell::Number(col.iter().sum())));
        rows.push(row);
    }
    Generated {
        table: Table::new(columns, rows).expect("generated table is rectangular"),
        kind,
        has_total,
        values,
        names,
    }
}

struct Draft {
    question: Vec<(&'static str, String)>,
    subject: Option<(usize, usize)>,
    program: Program,
    /// The answer computed directly from the template's meaning.
    expected: Answer,
    order_sensitive: bool,
}

fn words(parts: &[(&'static str, &str)]) -> Vec<(&'static str, String)> {
    parts.iter().map(|(t, w)| (*t, w.to_string())).collect()
}

fn rows_where(g: &Generated, keep: impl Fn(usize) -> bool) -> Answer {
    Answer::List(
        (0..g.names.len())
            .filter(|&r| keep(r))
            .map(|r| Cell::Text(g.names[r].to_string()))
            .collect(),
    )
}

fn draft(t: Template, g: &Generated, rng: &mut ChaCha8Rng) -> Draft {
    use Operator::*;
    let k = g.kind;
    let ncols = g.values.len();
    let col = rng.random_range(0..ncols);
    let col_name = g.table.columns()[col + 1].clone();
    let vals = &g.values[col];
    let trim = if g.has_total { Prev } else { ResetSelect };
    match t {
        Template::Max | Template::Min => {
            let (op, word) = if t == Template::Max {
                (Max, "most")
            } else {
                (Min, *["fewest", "least"].choose(rng).expect("nonempty"))
            };
            let best = vals
                .iter()
                .copied()
                .reduce(if op == Max { f64::max } else { f64::min })
                .expect("rows");
            Draft {
                question: words(&[
                    ("DET", "which"),
                    ("NOUN", k.noun),
                    ("VERB", "has"),
                    ("DET", "the"),
                    ("ADJ", word),
                    ("NOUN", &col_name),
                ]),
                subject: Some((1, 2)),
                program: Program::new([(ResetSelect, 0), (trim, 0), (op, col + 1), (Print, 0)]),
                expected: rows_where(g, |r| vals[r] == best),
                order_sensitive: false,
            }
        }
        Template::Count => Draft {
            question: words(&[
                ("ADV", "how"),
                ("ADJ", "many"),
                ("NOUN", k.plural),
                ("AUX", "are"),
                ("VERB", "listed"),
            ]),
            subject: Some((2, 3)),
            program: Program::new([(ResetSelect, 0), (ResetSelect, 0), (trim, 0), (Count, 0)]),
            expected: Answer::Scalar(g.names.len() as f64),
            order_sensitive: false,
        },
        Template::Lookup => {
            let r = rng.random_range(0..g.names.len());
            Draft {
                question: words(&[
                    ("PRON", "what"),
                    ("AUX", "is"),
                    ("DET", "the"),
                    ("NOUN", &col_name),
                    ("ADP", "of"),
                    ("PROPN", g.names[r]),
                ]),
                subject: Some((5, 6)),
                program: Program::new([(ResetSelect, 0), (ResetSelect, 0), (WordMatch, 0), (Print, col + 1)]),
                expected: Answer::List(vec![Cell::Number(vals[r])]),
                order_sensitive: false,
            }
        }
        Template::First | Template::Last => {
            let (word, program, row) = if t == Template::First {
                ("first", Program::new([(ResetSelect, 0), (ResetSelect, 0), (First, 0), (Print, 0)]), 0)
            } else if g.has_total {
                ("last", Program::new([(ResetSelect, 0), (Last, 0), (Prev, 0), (Print, 0)]), g.names.len() - 1)
            } else {
                ("last", Program::new([(ResetSelect, 0), (ResetSelect, 0), (Last, 0), (Print, 0)]), g.names.len() - 1)
            };
            Draft {
                question: words(&[
                    ("DET", "which"),
                    ("NOUN", k.noun),
                    ("AUX", "is"),
                    ("VERB", "listed"),
                    ("ADV", word),
                ]),
                subject: Some((1, 2)),
                program,
                expected: Answer::List(vec![Cell::Text(g.names[row].to_string())]),
                order_sensitive: true,
            }
        }
        Template::Geq => {
            let pivot = *vals.choose(rng).expect("rows");
            let literal = crate::tableexec::format_number(pivot);
            Draft {
                question: words(&[
                    ("ADV", "how"),
                    ("ADJ", "many"),
                    ("NOUN", k.plural),
                    ("VERB", "have"),
                    ("ADP", "at"),
                    ("ADJ", "least"),
                    ("NUM", &literal),
                    ("NOUN", &col_name),
                ]),
                subject: Some((2, 3)),
                program: Program::new([(ResetSelect, 0), (trim, 0), (Geq, col + 1), (Count, 0)]),
                expected: Answer::Scalar(vals.iter().filter(|&&v| v >= pivot).count() as f64),
                order_sensitive: false,
            }
        }
    }
}

/// Seeded synthetic table-QA corpus. Every gold answer is the execution of
/// the gold program and is cross-checked against the answer computed
/// directly from the template's meaning.
pub fn generate_synthetic(cfg: &GenConfig) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut plan: Vec<Template> = Template::ALL
        .iter()
        .flat_map(|&t| std::iter::repeat_n(t, cfg.counts.get(t)))
        .collect();
    plan.shuffle(&mut rng);

    let mut instances = Vec::with_capacity(plan.len());
    for (i, t) in plan.into_iter().enumerate() {
        let g = gen_table(cfg, &mut rng);
        let d = draft(t, &g, &mut rng);
        let (pos, question): (Vec<String>, Vec<String>) =
            d.question.into_iter().map(|(p, w)| (p.to_string(), w)).unzip();
        let id = format!("syn-{i:05}");
        let gold = execute(&d.program, &g.table, &question)?;
        if !gold.matches(&d.expected) {
            return Err(DatasetError::Unsound(id));
        }
        instances.push(Instance {
            id,
            question,
            table: Some(g.table),
            gold_answer: gold,
            gold_program: Some(d.program),
            pos_tags: Some(pos),
            subject_span: d.subject,
            order_sensitive: d.order_sensitive,
        });
    }
    Ok(Dataset {
        vocab: build_vocab(&instances),
        instances,
        provenance: Provenance::Synthetic { config: cfg.clone() },
    })
}

/// Synthetic answer-classification corpus configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierGenConfig {
    pub seed: u64,
    pub size: usize,
}

impl Default for ClassifierGenConfig {
    fn default() -> Self {
        Self { seed: 7, size: 1000 }
    }
}

const OBJECTS: [&str; 12] = [
    "apple", "ball", "car", "dog", "cat", "kite", "boat", "hat", "cup", "bus", "bird", "chair",
];
const COLORS: [&str; 6] = ["red", "white", "blue", "green", "black", "yellow"];
const NUMBERS: [&str; 4] = ["two", "three", "four", "five"];

/// Questions about a fixed scene: "what color is the X", "how many Xs are
/// there", "is there a X". Each object has one color, count and presence,
/// drawn from the seed.
pub fn generate_classifier(cfg: &ClassifierGenConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let colors: Vec<&str> = OBJECTS.iter().map(|_| *COLORS.choose(&mut rng).expect("colors")).collect();
    let counts: Vec<&str> = OBJECTS.iter().map(|_| *NUMBERS.choose(&mut rng).expect("numbers")).collect();
    let present: Vec<bool> = OBJECTS.iter().map(|_| rng.random_bool(0.5)).collect();
    let mut instances = Vec::with_capacity(cfg.size);
    for i in 0..cfg.size {
        let o = rng.random_range(0..OBJECTS.len());
        let obj = OBJECTS[o];
        let plural = format!("{obj}s");
        let (parts, answer, subject): (Vec<(&str, &str)>, &str, usize) = match rng.random_range(0..3) {
            0 => (
                vec![("PRON", "what"), ("NOUN", "color"), ("AUX", "is"), ("DET", "the"), ("NOUN", obj)],
                colors[o],
                4,
            ),
            1 => (
                vec![("ADV", "how"), ("ADJ", "many"), ("NOUN", &plural), ("AUX", "are"), ("ADV", "there")],
                counts[o],
                2,
            ),
            _ => (
                vec![("AUX", "is"), ("PRON", "there"), ("DET", "a"), ("NOUN", obj)],
                if present[o] { "yes" } else { "no" },
                3,
            ),
        };
        let mut inst = Instance::new(
            format!("cls-{i:05}"),
            parts.iter().map(|(_, w)| w.to_string()).collect(),
            Answer::label(answer),
        );
        inst.pos_tags = Some(parts.iter().map(|(p, _)| p.to_string()).collect());
        inst.subject_span = Some((subject, subject + 1));
        instances.push(inst);
    }
    Dataset {
        vocab: build_vocab(&instances),
        instances,
        provenance: Provenance::Classifier { config: cfg.clone() },
    }
}
