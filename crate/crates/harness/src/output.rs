//! CSV/JSON rendering. CSV uses `\n` line endings and writes floats with 17
//! significant digits so values round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

pub trait Tabular: Serialize {
    fn header() -> &'static [&'static str];
    fn record(&self) -> Vec<String>;
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn render<T: Tabular>(rows: &[T], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            let err = |e: csv::Error| HarnessError::Output(e.to_string());
            w.write_record(T::header()).map_err(err)?;
            for row in rows {
                w.write_record(row.record()).map_err(err)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| HarnessError::Output(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| HarnessError::Output(e.to_string()))
        }
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows)
                .map_err(|e| HarnessError::Output(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Writes to `path`, or stdout when `path` is `None`.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| HarnessError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| HarnessError::io("<stdout>", e)),
    }
}
