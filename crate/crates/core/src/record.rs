//! Experiment records.
//!
//! CSV output starts with a single `#`-prefixed JSON line carrying the
//! metadata (schema version, command, config, fits, timestamp, seed);
//! the body below it is plain CSV and depends only on the inputs. The
//! JSON-lines alternative writes the same header object on the first line
//! and one object per row after it.

use std::fmt;
use std::io::{BufRead, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{NandError, Result};
use crate::fit::LogLogFit;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(f) => Some(*f),
            Cell::Text(_) => None,
        }
    }

    fn parse(raw: &str) -> Cell {
        if let Ok(i) = raw.parse::<i64>() {
            Cell::Int(i)
        } else if let Ok(f) = raw.parse::<f64>() {
            Cell::Float(f)
        } else {
            Cell::Text(raw.to_string())
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            Cell::Float(f) => Value::from(*f),
            Cell::Text(s) => Value::from(s.clone()),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Float(x) => write!(f, "{x}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

/// A named fit stored in the header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub label: String,
    #[serde(flatten)]
    pub fit: LogLogFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub schema_version: u32,
    pub command: String,
    pub config: Value,
    #[serde(default)]
    pub fits: Vec<NamedFit>,
    pub timestamp: u64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub header: RecordHeader,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ExperimentRecord {
    pub fn new(command: &str, config: Value, seed: Option<u64>, columns: &[&str]) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            header: RecordHeader {
                schema_version: SCHEMA_VERSION,
                command: command.to_string(),
                config,
                fits: Vec::new(),
                timestamp,
                seed,
            },
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the column count");
        self.rows.push(row);
    }

    pub fn add_fit(&mut self, label: impl Into<String>, fit: LogLogFit) {
        self.header.fits.push(NamedFit {
            label: label.into(),
            fit,
        });
    }

    /// Schema version present, rows non-empty, every numeric cell finite.
    pub fn validate(&self) -> Result<()> {
        if self.header.schema_version == 0 {
            return Err(NandError::InvalidArgument("record has no schema version".into()));
        }
        if self.rows.is_empty() {
            return Err(NandError::InvalidArgument("record has no rows".into()));
        }
        for row in &self.rows {
            if let Some(Cell::Float(f)) = row.iter().find(|c| matches!(c, Cell::Float(f) if !f.is_finite())) {
                return Err(NandError::InvalidArgument(format!("non-finite cell {f} in record")));
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| NandError::InvalidArgument(format!("no column named {name:?}")))
    }

    /// Numeric values of a column, optionally restricted to rows where
    /// `filter.0 == filter.1`.
    pub fn numeric_column(&self, name: &str, filter: Option<(&str, &Cell)>) -> Result<Vec<f64>> {
        let idx = self.column(name)?;
        let filter_idx = filter.map(|(c, v)| self.column(c).map(|i| (i, v))).transpose()?;
        self.rows
            .iter()
            .filter(|row| filter_idx.is_none_or(|(i, v)| row[i].to_string() == v.to_string()))
            .map(|row| {
                row[idx]
                    .as_f64()
                    .ok_or_else(|| NandError::InvalidArgument(format!("column {name:?} has non-numeric cell {}", row[idx])))
            })
            .collect()
    }

    pub fn write(&self, format: Format, out: &mut impl Write) -> Result<()> {
        self.validate()?;
        match format {
            Format::Csv => self.write_csv(out),
            Format::Jsonl => self.write_jsonl(out),
        }
    }

    fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# {}", serde_json::to_string(&self.header)?)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_jsonl(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "{}", serde_json::to_string(&self.header)?)?;
        for row in &self.rows {
            let obj: Map<String, Value> = self
                .columns
                .iter()
                .cloned()
                .zip(row.iter().map(Cell::to_json))
                .collect();
            writeln!(out, "{}", serde_json::to_string(&obj)?)?;
        }
        Ok(())
    }

    /// Reads a CSV record written by [`write`](Self::write). A missing
    /// header line is tolerated for hand-made files.
    pub fn read_csv(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let mut header = None;
        let mut body = String::new();
        if let Some(first) = lines.next() {
            let first = first?;
            match first.strip_prefix('#') {
                Some(meta) => header = Some(serde_json::from_str::<RecordHeader>(meta.trim())?),
                None => {
                    body.push_str(&first);
                    body.push('\n');
                }
            }
        }
        for line in lines {
            body.push_str(&line?);
            body.push('\n');
        }
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(body.as_bytes());
        let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            rows.push(rec?.iter().map(Cell::parse).collect());
        }
        Ok(Self {
            header: header.unwrap_or(RecordHeader {
                schema_version: SCHEMA_VERSION,
                command: "external".into(),
                config: Value::Null,
                fits: Vec::new(),
                timestamp: 0,
                seed: None,
            }),
            columns,
            rows,
        })
    }
}
