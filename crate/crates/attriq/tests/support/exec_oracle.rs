//! A brute-force interpreter for the table language, written against the
//! operator definitions with row bitmasks instead of selections.

use attriq::tableexec::{Answer, Cell, Operator, Program, Table};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleResult {
    Answer(Answer),
    NonNumeric,
    MissingPivot,
    BadColumn,
}

fn number(cell: &Cell) -> Option<f64> {
    match cell {
        Cell::Number(v) => Some(*v),
        // text that reads as a number counts as one
        Cell::Text(s) => s.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

fn column_numbers(t: &Table, col: usize) -> Option<Vec<f64>> {
    (0..t.num_rows()).map(|r| number(t.cell(r, col))).collect()
}

fn pivot(question: &[String]) -> Option<f64> {
    for tok in question {
        if let Ok(v) = tok.parse::<f64>() {
            if v.is_finite() {
                return Some(v);
            }
        }
    }
    None
}

fn rows_of(mask: &[bool]) -> Vec<usize> {
    (0..mask.len()).filter(|&i| mask[i]).collect()
}

pub fn run(program: &Program, t: &Table, question: &[String]) -> OracleResult {
    let n = t.num_rows();
    let mut mask = vec![true; n];
    let steps = program.steps();
    for (k, s) in steps.iter().enumerate() {
        if s.column >= t.num_columns() {
            return OracleResult::BadColumn;
        }
        let last = k == steps.len() - 1;
        let mut next = vec![false; n];
        match s.op {
            Operator::Count | Operator::Print if !last => continue,
            Operator::Count => return OracleResult::Answer(Answer::Scalar(rows_of(&mask).len() as f64)),
            Operator::Print => {
                let cells = rows_of(&mask).into_iter().map(|r| t.cell(r, s.column).clone()).collect();
                return OracleResult::Answer(Answer::List(cells));
            }
            Operator::ResetSelect => next = vec![true; n],
            Operator::First => {
                if let Some(&r) = rows_of(&mask).first() {
                    next[r] = true;
                }
            }
            Operator::Last => {
                if let Some(&r) = rows_of(&mask).last() {
                    next[r] = true;
                }
            }
            Operator::Prev => {
                for r in 1..n {
                    next[r - 1] = mask[r];
                }
            }
            Operator::Next => {
                for r in 0..n.saturating_sub(1) {
                    next[r + 1] = mask[r];
                }
            }
            Operator::Max | Operator::Min => {
                let Some(vals) = column_numbers(t, s.column) else {
                    return OracleResult::NonNumeric;
                };
                for r in rows_of(&mask) {
                    let beaten = rows_of(&mask).into_iter().any(|o| {
                        if s.op == Operator::Max {
                            vals[o] > vals[r]
                        } else {
                            vals[o] < vals[r]
                        }
                    });
                    next[r] = !beaten;
                }
            }
            Operator::WordMatch => {
                for r in rows_of(&mask) {
                    next[r] = (0..t.num_columns()).any(|c| question.contains(&t.cell(r, c).text()));
                }
            }
            Operator::Geq => {
                let Some(vals) = column_numbers(t, s.column) else {
                    return OracleResult::NonNumeric;
                };
                let Some(p) = pivot(question) else {
                    return OracleResult::MissingPivot;
                };
                for r in rows_of(&mask) {
                    next[r] = vals[r] >= p;
                }
            }
        }
        mask = next;
    }
    let col = steps[steps.len() - 1].column;
    OracleResult::Answer(Answer::List(
        rows_of(&mask).into_iter().map(|r| t.cell(r, col).clone()).collect(),
    ))
}

/// Maps the executor's result into the oracle's vocabulary.
pub fn from_exec(r: Result<Answer, attriq::tableexec::ExecError>) -> OracleResult {
    use attriq::tableexec::ExecError;
    match r {
        Ok(a) => OracleResult::Answer(a),
        Err(ExecError::NonNumericColumn { .. }) => OracleResult::NonNumeric,
        Err(ExecError::MissingPivot) => OracleResult::MissingPivot,
        Err(_) => OracleResult::BadColumn,
    }
}

/// Tables of 1..=4 rows and 3 columns: a name column, a numeric column and
/// a column that is numeric unless `mixed`.
pub fn random_table(rng: &mut impl rand::Rng) -> Table {
    let names = ["ann", "bob", "cy", "dee", "5"];
    let n = rng.random_range(1..=4);
    let mixed = rng.random_bool(0.3);
    let rows = (0..n)
        .map(|r| {
            let third = if mixed && r == 0 {
                Cell::Text("n/a".into())
            } else {
                Cell::Number(rng.random_range(0..4) as f64)
            };
            vec![
                Cell::Text(names[rng.random_range(0..names.len())].into()),
                Cell::Number(rng.random_range(0..5) as f64),
                third,
            ]
        })
        .collect();
    Table::new(vec!["name".into(), "score".into(), "extra".into()], rows).expect("rectangular")
}

pub fn random_question(rng: &mut impl rand::Rng) -> Vec<String> {
    let words = ["ann", "bob", "who", "the", "2", "3.5", "dee", "0"];
    let len = rng.random_range(0..4);
    (0..len).map(|_| words[rng.random_range(0..words.len())].to_string()).collect()
}
