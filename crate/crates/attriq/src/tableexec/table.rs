use std::collections::HashSet;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::ExecError;

/// A table cell: a number or a string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Number(f64),
    Text(String),
}

/// True for strings that parse fully as a decimal float (`3`, `-1.5`, `2e3`),
/// rejecting `inf`, `nan` and the like.
pub fn parse_decimal(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty()
        || !s.bytes().any(|b| b.is_ascii_digit())
        || !s.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'))
    {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

impl Cell {
    /// Numeric value, if the cell is a number or a string that parses as one.
    pub fn numeric(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            Cell::Text(s) => parse_decimal(s),
        }
    }

    /// Canonical lowercase string form used for word matching and answer
    /// comparison. Integral numbers print without a fractional part.
    pub fn text(&self) -> String {
        match self {
            Cell::Number(v) => format_number(*v),
            Cell::Text(s) => s.to_lowercase(),
        }
    }

    /// Parses a raw field: numbers become [`Cell::Number`].
    pub fn parse(raw: &str) -> Cell {
        match parse_decimal(raw) {
            Some(v) => Cell::Number(v),
            None => Cell::Text(raw.to_string()),
        }
    }
}

pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Number(v) => f.write_str(&format_number(*v)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Deserialize)]
struct RawTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

/// Named columns over rows of cells. Every row has one cell per column and
/// column names are unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl TryFrom<RawTable> for Table {
    type Error = ExecError;

    fn try_from(raw: RawTable) -> Result<Self, Self::Error> {
        Table::new(raw.columns, raw.rows)
    }
}

impl Table {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, ExecError> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(ExecError::DuplicateColumn(c.clone()));
            }
        }
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(ExecError::RaggedRow {
                row: i,
                cells: row.len(),
                columns: columns.len(),
            });
        }
        Ok(Self { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.rows[row][col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column, or `None` if any cell is non-numeric.
    pub fn numeric_column(&self, col: usize) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r[col].numeric()).collect()
    }

    /// Table with rows rearranged so that new row `i` is old row `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Table {
        debug_assert_eq!(order.len(), self.rows.len());
        Table {
            columns: self.columns.clone(),
            rows: order.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Reads a CSV table with a header row. Fields that parse as numbers
    /// become numeric cells.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, ExecError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let columns = rdr
            .headers()
            .map_err(|e| ExecError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ExecError::Csv(e.to_string()))?;
            rows.push(rec.iter().map(Cell::parse).collect());
        }
        Table::new(columns, rows)
    }
}
