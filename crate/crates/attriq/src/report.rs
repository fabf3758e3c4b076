//! Renderings of attribution reports: colored question text (HTML or ANSI)
//! and the operator/column alignment matrix (CSV and SVG).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{AttributionReport, TargetSelector};
use crate::models::STEPS;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("expected {expected} reports, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("reports belong to different instances: {0} and {1}")]
    MismatchedInstances(String, String),
    #[error("report {index} has target {found}, expected {expected}")]
    WrongTarget {
        index: usize,
        found: String,
        expected: String,
    },
    #[error("reports disagree on their rows")]
    MismatchedRows,
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    Ansi,
    Html,
}

pub const GRAY: (u8, u8, u8) = (128, 128, 128);
pub const RED: (u8, u8, u8) = (255, 64, 64);
pub const BLUE: (u8, u8, u8) = (64, 64, 255);

/// Normalized value in `[−1, 1]` and its display color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorSpec {
    pub value: f64,
    pub rgb: (u8, u8, u8),
}

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

impl ColorSpec {
    /// Color of an already normalized value: gray below 0.1 in magnitude,
    /// otherwise a linear ramp from gray to red (positive) or blue.
    pub fn from_normalized(value: f64) -> Self {
        let v = value.clamp(-1.0, 1.0);
        let rgb = if v.abs() < 0.1 {
            GRAY
        } else {
            let end = if v > 0.0 { RED } else { BLUE };
            let t = v.abs();
            (lerp(GRAY.0, end.0, t), lerp(GRAY.1, end.1, t), lerp(GRAY.2, end.2, t))
        };
        ColorSpec { value: v, rgb }
    }

    /// Divides by the largest magnitude; an all-zero input stays gray.
    pub fn normalize(scores: &[f64]) -> Vec<ColorSpec> {
        let max = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        scores
            .iter()
            .map(|&s| ColorSpec::from_normalized(if max > 0.0 { s / max } else { 0.0 }))
            .collect()
    }

    pub fn css(&self) -> String {
        format!("rgb({},{},{})", self.rgb.0, self.rgb.1, self.rgb.2)
    }
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn target_label(t: &TargetSelector) -> String {
    match t {
        TargetSelector::Class { class } => format!("class {class}"),
        TargetSelector::Operator { step, op } => format!("step {step} operator {}", op.name()),
        TargetSelector::Column { step, column } => format!("step {step} column {column}"),
    }
}

fn html_page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n</head>\n\
         <body style=\"font-family:sans-serif\">\n{body}</body>\n</html>\n",
        escape_html(title)
    )
}

/// Colored question text for one report. Omitted reports render as a
/// placeholder naming the reason.
pub fn render_text(report: &AttributionReport, mode: TextMode) -> String {
    let title = format!("{} ({})", report.instance_id, target_label(&report.target));
    let gold = report.gold.to_string();
    if report.omitted {
        let reason = format!(
            "attribution omitted: the prediction \"{}\" equals the prediction for the empty question",
            report.predicted_label
        );
        return match mode {
            TextMode::Html => html_page(&title, &format!("<p>{}</p>\n", escape_html(&reason))),
            TextMode::Ansi => format!("{title}\n{reason}\n"),
        };
    }
    let colors = ColorSpec::normalize(&report.token_scores);
    match mode {
        TextMode::Html => {
            let mut body = String::from("<p>");
            for (i, (tok, c)) in report.tokens.iter().zip(&colors).enumerate() {
                if i > 0 {
                    body.push(' ');
                }
                let _ = write!(
                    body,
                    "<span style=\"background-color:{};padding:0 2px\" title=\"{}\">{}</span>",
                    c.css(),
                    report.token_scores[i],
                    escape_html(tok)
                );
            }
            body.push_str("</p>\n");
            let _ = writeln!(body, "<p>prediction: {}</p>", escape_html(&report.predicted_label));
            let _ = writeln!(body, "<p>gold: {}</p>", escape_html(&gold));
            html_page(&title, &body)
        }
        TextMode::Ansi => {
            let mut out = format!("{title}\n");
            let spans: Vec<String> = report
                .tokens
                .iter()
                .zip(&colors)
                .map(|(tok, c)| format!("\x1b[48;2;{};{};{}m{tok}\x1b[0m", c.rgb.0, c.rgb.1, c.rgb.2))
                .collect();
            out.push_str(&spans.join(" "));
            let _ = write!(out, "\nprediction: {}\ngold: {gold}\n", report.predicted_label);
            out
        }
    }
}

/// Attribution matrix for the 2·T selections of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub instance_id: String,
    /// Tokens (with match tokens), then `prior:<column>` and
    /// `entry_prior:<column>` pseudo-rows.
    pub rows: Vec<String>,
    /// Operator selections of steps 0..T, then column selections.
    pub columns: Vec<String>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<f64>>,
}

/// Builds the matrix from [`crate::attribution::step_reports`] output.
/// Selections equal to their baseline counterpart get an all-zero column.
pub fn alignment(reports: &[AttributionReport]) -> Result<Alignment, ReportError> {
    if reports.len() != 2 * STEPS {
        return Err(ReportError::WrongCount {
            expected: 2 * STEPS,
            got: reports.len(),
        });
    }
    let first = &reports[0];
    let mut rows = first.tokens.clone();
    rows.extend(first.columns.iter().map(|c| format!("prior:{c}")));
    rows.extend(first.columns.iter().map(|c| format!("entry_prior:{c}")));
    let mut columns = Vec::with_capacity(2 * STEPS);
    let mut cells = vec![Vec::with_capacity(2 * STEPS); rows.len()];
    for (index, r) in reports.iter().enumerate() {
        if r.instance_id != first.instance_id {
            return Err(ReportError::MismatchedInstances(
                first.instance_id.clone(),
                r.instance_id.clone(),
            ));
        }
        if r.tokens != first.tokens || r.columns != first.columns {
            return Err(ReportError::MismatchedRows);
        }
        let (want_op, step) = (index < STEPS, index % STEPS);
        let ok = match r.target {
            TargetSelector::Operator { step: s, .. } => want_op && s == step,
            TargetSelector::Column { step: s, .. } => !want_op && s == step,
            TargetSelector::Class { .. } => false,
        };
        if !ok {
            return Err(ReportError::WrongTarget {
                index,
                found: target_label(&r.target),
                expected: format!("step {step} {}", if want_op { "operator" } else { "column" }),
            });
        }
        let kind = if want_op { "op" } else { "col" };
        columns.push(format!("{kind}{step}:{}", r.predicted_label));
        let values = r.token_scores.iter().chain(&r.column_prior).chain(&r.entry_prior);
        for (row, &v) in cells.iter_mut().zip(values) {
            row.push(if r.omitted { 0.0 } else { v });
        }
    }
    Ok(Alignment {
        instance_id: first.instance_id.clone(),
        rows,
        columns,
        cells,
    })
}

impl Alignment {
    /// Header `token,<selections…>`, one line per row.
    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["token".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("utf-8"))
    }

    /// Heatmap with each selection column normalized on its own.
    pub fn to_svg(&self) -> String {
        const CELL_W: usize = 64;
        const CELL_H: usize = 20;
        const LEFT: usize = 140;
        const TOP: usize = 90;
        let width = LEFT + CELL_W * self.columns.len() + 10;
        let height = TOP + CELL_H * self.rows.len() + 10;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
             font-family=\"sans-serif\" font-size=\"11\">\n"
        );
        let _ = writeln!(s, "<title>{}</title>", escape_html(&self.instance_id));
        for (j, col) in self.columns.iter().enumerate() {
            let x = LEFT + j * CELL_W + CELL_W / 2;
            let _ = writeln!(
                s,
                "<text x=\"{x}\" y=\"{}\" transform=\"rotate(-45 {x} {})\">{}</text>",
                TOP - 6,
                TOP - 6,
                escape_html(col)
            );
        }
        let colors: Vec<Vec<ColorSpec>> = (0..self.columns.len())
            .map(|j| ColorSpec::normalize(&self.cells.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect();
        for (i, name) in self.rows.iter().enumerate() {
            let y = TOP + i * CELL_H;
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
                LEFT - 6,
                y + CELL_H - 6,
                escape_html(name)
            );
            for (j, col) in colors.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "<rect x=\"{}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"{}\"><title>{}</title></rect>",
                    LEFT + j * CELL_W,
                    col[i].css(),
                    self.cells[i][j]
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// CSV and SVG documents for one instance's selections.
pub fn render_alignment(reports: &[AttributionReport]) -> Result<(String, String), ReportError> {
    let a = alignment(reports)?;
    Ok((a.to_csv()?, a.to_svg()))
}
