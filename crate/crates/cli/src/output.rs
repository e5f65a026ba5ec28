//! Output buffering: everything is rendered first and written once.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use nalgebra::DMatrix;
use serde_json::Value;

use crate::CliError;

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// A table with `#` comment lines ahead of the header.
#[derive(Debug, Default)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut s = String::new();
                for c in &self.comments {
                    let _ = writeln!(s, "# {c}");
                }
                let _ = writeln!(s, "{}", self.header.join(","));
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    let _ = writeln!(s, "{}", cells.join(","));
                }
                s
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        Value::Object(
                            self.header
                                .iter()
                                .zip(row)
                                .map(|(h, v)| (h.clone(), number(*v)))
                                .collect(),
                        )
                    })
                    .collect();
                let doc = serde_json::json!({ "comments": self.comments, "rows": rows });
                serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n"
            }
        }
    }
}

/// JSON number, or the strings "inf"/"-inf"/"nan" that JSON cannot encode.
pub fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(format!("{v}").to_lowercase()), Value::Number)
}

pub fn matrix(a: &DMatrix<f64>) -> Value {
    Value::Array((0..a.nrows()).map(|i| Value::Array(a.row(i).iter().map(|v| number(*v)).collect())).collect())
}

pub fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    let res = match out {
        Some(path) => std::fs::write(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush())
        }
    };
    res.map_err(|e| CliError::Output(format!("cannot write output: {e}")))
}
