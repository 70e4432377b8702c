//! Result files.
//!
//! A command writes `<command>.json` (the result envelope, deterministic for a
//! given config and seed), `<command>.meta.json` (timestamps and invocation
//! details) and any number of CSV series, each with a `.csv.json` sidecar that
//! names its axes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// JSON Schema every result envelope validates against.
pub const RESULT_SCHEMA: &str = include_str!("../schema/result.schema.json");

/// JSON Schema for run configurations (the TOML document as JSON).
pub const CONFIG_SCHEMA: &str = include_str!("../schema/config.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    /// False when any geodesic computation hit its iteration cap.
    pub converged: bool,
    pub config: RunConfig,
    pub result: Value,
}

/// A table meant for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub description: String,
    pub x: String,
    pub y: String,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, description: &str, x: &str, y: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            x: x.to_string(),
            y: y.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Everything a command produces, before it touches the filesystem.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: &'static str,
    pub result: Value,
    pub converged: bool,
    pub series: Vec<Series>,
    /// Additional files (name, contents), e.g. extracted sample sets.
    pub files: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub command: String,
    pub tool_version: String,
    pub args: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    pub elapsed_seconds: f64,
    pub output_dir: String,
    pub result_file: String,
    pub files: Vec<String>,
}

pub fn envelope(report: &Report, config: &RunConfig) -> Envelope {
    Envelope {
        schema_version: SCHEMA_VERSION,
        command: report.command.to_string(),
        seed: config.test.seed,
        converged: report.converged,
        config: config.clone(),
        result: report.result.clone(),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn to_json_pretty(value: &impl Serialize) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes the envelope, series and extra files; returns the paths written.
pub fn write_report(dir: &Path, report: &Report, config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    let main = dir.join(format!("{}.json", report.command));
    write(&main, &to_json_pretty(&envelope(report, config))?)?;
    written.push(main);
    for s in &report.series {
        let csv = dir.join(format!("{}.csv", s.name));
        write(&csv, &s.to_csv()?)?;
        let sidecar = dir.join(format!("{}.csv.json", s.name));
        write(&sidecar, &to_json_pretty(s)?)?;
        written.extend([csv, sidecar]);
    }
    for (name, contents) in &report.files {
        let p = dir.join(name);
        write(&p, contents)?;
        written.push(p);
    }
    Ok(written)
}

pub fn write_metadata(dir: &Path, meta: &Metadata) -> Result<PathBuf, CliError> {
    let p = dir.join(format!("{}.meta.json", meta.command));
    write(&p, &to_json_pretty(meta)?)?;
    Ok(p)
}
