use super::{parse_decimal, Answer, ExecError, Operator, Program, Selection, Table};

/// Outcome of a single step: a narrowed selection or a final answer.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Selection(Selection),
    Answer(Answer),
}

/// First token of the question that parses as a decimal number.
pub fn numeric_pivot(question: &[String]) -> Option<f64> {
    question.iter().find_map(|t| parse_decimal(t))
}

fn numeric_column(table: &Table, op: Operator, col: usize) -> Result<Vec<f64>, ExecError> {
    table
        .numeric_column(col)
        .ok_or(ExecError::NonNumericColumn { op, column: col })
}

fn check_column(table: &Table, col: usize) -> Result<(), ExecError> {
    if col >= table.num_columns() {
        return Err(ExecError::ColumnOutOfRange {
            column: col,
            columns: table.num_columns(),
        });
    }
    Ok(())
}

/// Applies one operator to `sel`.
pub fn step(
    sel: &Selection,
    op: Operator,
    col: usize,
    table: &Table,
    question: &[String],
) -> Result<StepOutcome, ExecError> {
    check_column(table, col)?;
    let n = table.num_rows();
    if sel.rows().iter().any(|&r| r >= n) {
        return Err(ExecError::InvalidSelection);
    }
    let rows = sel.rows();
    let selection = |v: Vec<usize>| Ok(StepOutcome::Selection(Selection::from_rows(v)));
    match op {
        Operator::ResetSelect => Ok(StepOutcome::Selection(Selection::all(n))),
        Operator::First => selection(rows.first().copied().into_iter().collect()),
        Operator::Last => selection(rows.last().copied().into_iter().collect()),
        Operator::Prev => selection(rows.iter().filter(|&&i| i >= 1).map(|&i| i - 1).collect()),
        Operator::Next => selection(rows.iter().map(|&i| i + 1).filter(|&i| i < n).collect()),
        Operator::Max | Operator::Min => {
            let values = numeric_column(table, op, col)?;
            let pick = |a: f64, b: f64| if op == Operator::Max { a.max(b) } else { a.min(b) };
            let Some(extreme) = rows.iter().map(|&i| values[i]).reduce(pick) else {
                return selection(Vec::new());
            };
            selection(rows.iter().copied().filter(|&i| values[i] == extreme).collect())
        }
        Operator::Count => Ok(StepOutcome::Answer(Answer::Scalar(rows.len() as f64))),
        Operator::Print => Ok(StepOutcome::Answer(Answer::List(
            rows.iter().map(|&i| table.cell(i, col).clone()).collect(),
        ))),
        Operator::WordMatch => selection(
            rows.iter()
                .copied()
                .filter(|&i| {
                    table.rows()[i]
                        .iter()
                        .any(|c| {
                            let text = c.text();
                            question.iter().any(|t| *t == text)
                        })
                })
                .collect(),
        ),
        Operator::Geq => {
            let values = numeric_column(table, op, col)?;
            let pivot = numeric_pivot(question).ok_or(ExecError::MissingPivot)?;
            selection(rows.iter().copied().filter(|&i| values[i] >= pivot).collect())
        }
    }
}

/// Runs a program left to right from the all-rows selection.
///
/// `count`/`print` in a non-final position leave the selection unchanged.
/// A final operator other than `count`/`print` is applied and its column is
/// then printed over the resulting selection.
pub fn execute(program: &Program, table: &Table, question: &[String]) -> Result<Answer, ExecError> {
    let mut sel = Selection::all(table.num_rows());
    let steps = program.steps();
    for (i, s) in steps.iter().enumerate() {
        let last = i + 1 == steps.len();
        if s.op.is_terminal() && !last {
            check_column(table, s.column)?;
            continue;
        }
        match step(&sel, s.op, s.column, table, question)? {
            StepOutcome::Answer(a) => return Ok(a),
            StepOutcome::Selection(next) => sel = next,
        }
    }
    let last = steps[steps.len() - 1];
    match step(&sel, Operator::Print, last.column, table, question)? {
        StepOutcome::Answer(a) => Ok(a),
        StepOutcome::Selection(_) => unreachable!("print always answers"),
    }
}
