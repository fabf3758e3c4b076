//! Tables, the operator language and a discrete executor for four-step
//! programs.

mod exec;
mod program;
mod table;

pub use exec::{execute, numeric_pivot, step, StepOutcome};
pub use program::{Answer, Operator, Program, Selection, Step, PROGRAM_LEN};
pub use table::{format_number, parse_decimal, Cell, Table};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("{op} needs a numeric column, column {column} is not numeric")]
    NonNumericColumn { op: Operator, column: usize },
    #[error("geq needs a numeric literal in the question")]
    MissingPivot,
    #[error("column {column} out of range for a table with {columns} columns")]
    ColumnOutOfRange { column: usize, columns: usize },
    #[error("selection refers to rows outside the table")]
    InvalidSelection,
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("row {row} has {cells} cells, expected {columns}")]
    RaggedRow { row: usize, cells: usize, columns: usize },
    #[error("csv: {0}")]
    Csv(String),
}
