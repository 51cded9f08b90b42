//! Result tables and their CSV/JSON serialization.
//!
//! CSV output starts with `# `-prefixed comment lines: the command, the
//! resolved config as one line of JSON, then free-form notes. Data rows follow
//! with a single header line. Floats use the shortest round-trip form.

use std::io::Write;

use serde_json::{json, Map, Value};

use super::config::{ExperimentConfig, Format, Mode};
use super::CliError;

pub const CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(v) => json!(v.to_string()),
            Cell::Bool(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }
}

/// Everything a command produces.
#[derive(Debug, Clone)]
pub struct Report {
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub notes: Vec<(String, Cell)>,
    pub table: Table,
    /// Reason the run is invalid, if it is.
    pub invalid: Option<String>,
}

impl Report {
    pub fn new(mode: Mode, config: ExperimentConfig, table: Table) -> Self {
        Self {
            mode,
            config,
            notes: Vec::new(),
            table,
            invalid: None,
        }
    }

    pub fn note(&mut self, key: &str, value: impl Into<Cell>) {
        self.notes.push((key.to_string(), value.into()));
    }

    pub fn invalidate(&mut self, reason: impl Into<String>) {
        let reason = reason.into();
        self.invalid = Some(match self.invalid.take() {
            Some(prev) => format!("{prev}; {reason}"),
            None => reason,
        });
    }

    pub fn write<W: Write>(&self, format: Format, writer: W) -> Result<(), CliError> {
        match format {
            Format::Csv => self.write_csv(writer),
            Format::Json => self.write_json(writer),
        }
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Other(e.to_string());
        writeln!(writer, "# cqcd {}", self.mode.name()).map_err(io)?;
        writeln!(writer, "{CONFIG_PREFIX}{}", self.config.to_json()).map_err(io)?;
        for (key, value) in &self.notes {
            writeln!(writer, "# {key}: {}", value.csv()).map_err(io)?;
        }
        if let Some(reason) = &self.invalid {
            writeln!(writer, "# invalid: {reason}").map_err(io)?;
        }
        let mut out = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| CliError::Other(e.to_string());
        out.write_record(&self.table.columns).map_err(csv_err)?;
        for row in &self.table.rows {
            out.write_record(row.iter().map(Cell::csv)).map_err(csv_err)?;
        }
        out.flush().map_err(io)
    }

    pub fn to_json_value(&self) -> Value {
        let notes: Map<String, Value> = self.notes.iter().map(|(k, v)| (k.clone(), v.json())).collect();
        let rows: Vec<Value> = self
            .table
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .table
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.to_string(), v.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        json!({
            "command": self.mode.name(),
            "config": serde_json::to_value(&self.config).expect("config serializes"),
            "notes": notes,
            "invalid": self.invalid,
            "columns": self.table.columns,
            "rows": rows,
        })
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<(), CliError> {
        serde_json::to_writer_pretty(&mut writer, &self.to_json_value())
            .map_err(|e| CliError::Other(e.to_string()))?;
        writeln!(writer).map_err(|e| CliError::Other(e.to_string()))
    }
}

/// Data lines of a CSV output: everything after the comment header.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
