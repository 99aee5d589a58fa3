//! Run directory layout and the content-hash manifest.
//!
//! Every file is produced in memory first and written in one pass at the
//! end, so a failed run leaves no partial artifacts behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::svg::Chart;

pub const MANIFEST: &str = "MANIFEST";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// A flat table: header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

/// Shortest round-trip decimal form, no locale.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub struct Outcome {
    pub report: serde_json::Value,
    pub tables: Vec<Table>,
    pub plots: Vec<(String, Chart)>,
    /// Extra files written verbatim.
    pub blobs: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn new(report: impl Serialize) -> Self {
        Outcome {
            report: serde_json::to_value(report).expect("report serializes"),
            tables: Vec::new(),
            plots: Vec::new(),
            blobs: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `report.json`: command, checks and report, keys sorted.
pub fn report_json(command: &str, outcome: &Outcome) -> Vec<u8> {
    let doc = serde_json::json!({
        "command": command,
        "passed": outcome.passed(),
        "checks": outcome.checks,
        "report": outcome.report,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("json");
    text.push('\n');
    text.into_bytes()
}

/// All files of a run, in manifest order.
pub fn render_files(command: &str, config_snapshot: &str, seed: u64, outcome: &Outcome) -> Result<Vec<(String, Vec<u8>)>, csv::Error> {
    let mut files = vec![
        ("config.toml".to_string(), config_snapshot.as_bytes().to_vec()),
        ("seed.txt".to_string(), format!("{seed}\n").into_bytes()),
        ("report.json".to_string(), report_json(command, outcome)),
    ];
    for t in &outcome.tables {
        files.push((format!("{}.csv", t.name), t.to_csv()?));
    }
    for (name, chart) in &outcome.plots {
        files.push((format!("{name}.svg"), chart.render().into_bytes()));
    }
    files.extend(outcome.blobs.iter().cloned());
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(files)
}

pub fn manifest(files: &[(String, Vec<u8>)]) -> String {
    files.iter().map(|(name, bytes)| format!("{}  {name}\n", sha256(bytes))).collect()
}

/// Writes `files` and the manifest into `dir`. An existing directory is
/// replaced only if it holds a previous run.
pub fn write_run(dir: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<PathBuf> {
    if dir.exists() {
        if !dir.join(MANIFEST).exists() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} exists and is not a run directory", dir.display()),
            ));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
    }
    fs::write(dir.join(MANIFEST), manifest(files))?;
    Ok(dir.to_path_buf())
}
