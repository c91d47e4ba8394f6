//! Plain fixed-width text tables.

use std::fmt::Write;

pub struct Table {
    header: Vec<String>,
    /// Left-align column `i` when `left[i]` is set.
    left: Vec<bool>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            left: vec![false; header.len()],
            rows: Vec::new(),
        }
    }

    pub fn left_align(mut self, col: usize) -> Self {
        self.left[col] = true;
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.header[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if self.left[c] {
                        format!("{:<w$}", s, w = widths[c])
                    } else {
                        format!("{:>w$}", s, w = widths[c])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&self.header);
        for r in &self.rows {
            line(r);
        }
        out
    }
}

/// P-values in the compact scientific form `2.32e-1`; `-` when absent.
pub fn pval(p: Option<f64>) -> String {
    match p {
        None => "-".into(),
        Some(v) if v == 1.0 => "1.00".into(),
        Some(v) if v == 0.0 => "0".into(),
        Some(v) => format!("{v:.2e}"),
    }
}

pub fn num(v: f64) -> String {
    format!("{v:.4}")
}
