use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use super::Cell;

/// Operators of the table language, in stable ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    ResetSelect,
    First,
    Last,
    Prev,
    Next,
    Max,
    Min,
    Count,
    Print,
    WordMatch,
    Geq,
}

impl Operator {
    pub const ALL: [Operator; 11] = [
        Operator::ResetSelect,
        Operator::First,
        Operator::Last,
        Operator::Prev,
        Operator::Next,
        Operator::Max,
        Operator::Min,
        Operator::Count,
        Operator::Print,
        Operator::WordMatch,
        Operator::Geq,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Operator> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Operator::ResetSelect => "reset_select",
            Operator::First => "first",
            Operator::Last => "last",
            Operator::Prev => "prev",
            Operator::Next => "next",
            Operator::Max => "max",
            Operator::Min => "min",
            Operator::Count => "count",
            Operator::Print => "print",
            Operator::WordMatch => "word_match",
            Operator::Geq => "geq",
        }
    }

    pub fn from_name(name: &str) -> Option<Operator> {
        Self::ALL.into_iter().find(|o| o.name() == name)
    }

    /// Operators whose result depends on row order.
    pub fn is_positional(self) -> bool {
        matches!(
            self,
            Operator::First | Operator::Last | Operator::Prev | Operator::Next
        )
    }

    /// Operators that produce an answer rather than a selection.
    pub fn is_terminal(self) -> bool {
        matches!(self, Operator::Count | Operator::Print)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One `(operator, column)` selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(Operator, usize)", into = "(Operator, usize)")]
pub struct Step {
    pub op: Operator,
    pub column: usize,
}

impl Step {
    pub fn new(op: Operator, column: usize) -> Self {
        Self { op, column }
    }
}

impl From<(Operator, usize)> for Step {
    fn from((op, column): (Operator, usize)) -> Self {
        Self { op, column }
    }
}

impl From<Step> for (Operator, usize) {
    fn from(s: Step) -> Self {
        (s.op, s.column)
    }
}

pub const PROGRAM_LEN: usize = 4;

/// Exactly four `(operator, column)` selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Program(pub [Step; PROGRAM_LEN]);

impl Program {
    pub fn new(steps: [(Operator, usize); PROGRAM_LEN]) -> Self {
        Program(steps.map(Step::from))
    }

    pub fn steps(&self) -> &[Step; PROGRAM_LEN] {
        &self.0
    }

    pub fn operators(&self) -> [Operator; PROGRAM_LEN] {
        self.0.map(|s| s.op)
    }

    pub fn has_positional(&self) -> bool {
        self.0.iter().any(|s| s.op.is_positional())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| format!("{}({})", s.op, s.column)).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Row indices in strictly increasing order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Selection(Vec<usize>);

impl Selection {
    pub fn all(n: usize) -> Self {
        Selection((0..n).collect())
    }

    /// Sorts and dedups `rows`.
    pub fn from_rows(mut rows: Vec<usize>) -> Self {
        rows.sort_unstable();
        rows.dedup();
        Selection(rows)
    }

    pub fn rows(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Result of executing a program.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Answer {
    Scalar(f64),
    List(Vec<Cell>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnswerRepr {
    Scalar(f64),
    List(Vec<Cell>),
    Label(String),
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match AnswerRepr::deserialize(d)? {
            AnswerRepr::Scalar(v) => Answer::Scalar(v),
            AnswerRepr::List(cells) => Answer::List(cells),
            AnswerRepr::Label(s) => Answer::List(vec![Cell::Text(s)]),
        })
    }
}

impl Answer {
    /// A single-label answer, as produced by answer classifiers.
    pub fn label(s: impl Into<String>) -> Self {
        Answer::List(vec![Cell::Text(s.into())])
    }

    /// Sorted canonical strings; the comparison key for [`Answer::matches`].
    pub fn canonical(&self) -> Vec<String> {
        let mut v = match self {
            Answer::Scalar(x) => vec![super::table::format_number(*x)],
            Answer::List(cells) => cells.iter().map(Cell::text).collect(),
        };
        v.sort();
        v
    }

    /// Denotation equality: multiset equality of canonical cell strings, so
    /// that `5`, `[5]` and `["5"]` agree and list order is ignored.
    pub fn matches(&self, other: &Answer) -> bool {
        self.canonical() == other.canonical()
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Scalar(v) => f.write_str(&super::table::format_number(*v)),
            Answer::List(cells) => {
                let parts: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
                f.write_str(&parts.join(", "))
            }
        }
    }
}
