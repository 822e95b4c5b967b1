//! Report rendering: aligned tables, CSV rows, and JSON mirrors.
//!
//! Every subcommand reduces to the same shape: a header row, string cells,
//! and a JSON value carrying the raw numbers. Curve-producing commands
//! override the CSV body with the curve itself so `--format csv` prints
//! exactly the bytes `--out` would write.

use std::fmt::Write as _;

/// Stdout format of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Aligned human-readable table.
    Table,
    /// Comma-separated rows (the command's CSV artifact where it has one).
    Csv,
    /// Machine-readable mirror of the table, including raw curve data.
    Json,
}

/// A rendered command result.
pub struct Report {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub json: serde_json::Value,
    /// CSV body for `--format csv`; the report rows when absent.
    pub csv: Option<String>,
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => render_table(&self.headers, &self.rows),
            Format::Csv => match &self.csv {
                Some(text) => text.clone(),
                None => render_csv(&self.headers, &self.rows),
            },
            Format::Json => {
                let mut text =
                    serde_json::to_string_pretty(&self.json).expect("report values are plain JSON");
                text.push('\n');
                text
            }
        }
    }
}

/// Aligned text table: first column left-aligned, the rest right-aligned,
/// a dash rule under the header.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            width[i] = width[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut emit = |cells: &[String]| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let pad = " ".repeat(width[i].saturating_sub(cell.chars().count()));
            if i == 0 {
                line.push_str(cell);
                line.push_str(&pad);
            } else {
                line.push_str(&pad);
                line.push_str(cell);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    };
    emit(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    emit(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in rows {
        emit(row);
    }
    out
}

pub fn render_csv(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", headers.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// SI-prefixed value with the given number of significant digits:
/// `si(3.31e-9, 2, "T")` is "3.3 nT".
pub fn si(value: f64, digits: u32, unit: &str) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value} {unit}").trim_end().to_string();
    }
    const PREFIXES: [(f64, &str); 9] = [
        (1e9, "G"),
        (1e6, "M"),
        (1e3, "k"),
        (1.0, ""),
        (1e-3, "m"),
        (1e-6, "u"),
        (1e-9, "n"),
        (1e-12, "p"),
        (1e-15, "f"),
    ];
    let mag = value.abs();
    let (scale, prefix) = PREFIXES
        .iter()
        .find(|(s, _)| mag >= *s)
        .copied()
        .unwrap_or(*PREFIXES.last().unwrap());
    let mantissa = value / scale;
    let leading = 1 + mantissa.abs().log10().max(0.0) as u32;
    let decimals = digits.saturating_sub(leading) as usize;
    format!("{mantissa:.decimals$} {prefix}{unit}")
        .trim_end()
        .to_string()
}

/// Compact decimal for dimensionless parameters: Rust's shortest round-trip
/// form unless that is long (irrational constants), then 4 decimals.
pub fn short(value: f64) -> String {
    let s = format!("{value}");
    if s.len() <= 8 {
        s
    } else {
        format!("{value:.4}")
    }
}
