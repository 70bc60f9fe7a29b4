//! In-memory output files, CSV helpers and the run manifest.

use std::fs;
use std::path::Path;

use ftem_core::fmt_f64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Resolved;
use crate::CliError;

pub const TOOL_NAME: &str = "ftem";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Files produced by one command, keyed by path relative to the output dir.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn text(&mut self, name: impl Into<String>, body: String) {
        self.files.push((name.into(), body.into_bytes()));
    }

    pub fn json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let mut body = serde_json::to_string_pretty(value).expect("outputs serialize to JSON");
        body.push('\n');
        self.text(name, body);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

/// Comma-separated table with a fixed header.
#[derive(Debug, Clone)]
pub struct Csv {
    body: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut body = header.join(",");
        body.push('\n');
        Csv { body, width: header.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.width);
        let parts: Vec<String> = cells.iter().map(Cell::render).collect();
        self.body.push_str(&parts.join(","));
        self.body.push('\n');
    }

    pub fn nums(&mut self, xs: &[f64]) {
        let cells: Vec<Cell> = xs.iter().map(|x| Cell::Num(*x)).collect();
        self.row(&cells);
    }

    /// Comment line, written verbatim after `# `.
    pub fn comment(&mut self, text: &str) {
        self.body.push_str("# ");
        self.body.push_str(text);
        self.body.push('\n');
    }

    pub fn finish(self) -> String {
        self.body
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    OptNum(Option<f64>),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::OptNum(Some(x)) => fmt_f64(*x),
            Cell::OptNum(None) => String::new(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.replace([',', '\n'], ";"),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
}

pub fn manifest(cfg: &Resolved, artifacts: &Artifacts) -> Manifest {
    let canonical = cfg.canonical_json();
    Manifest {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        command: cfg.command.name(),
        config_sha256: cfg.hash(),
        config: serde_json::from_str(&canonical).expect("canonical config is JSON"),
        files: artifacts
            .files
            .iter()
            .map(|(name, body)| FileEntry { name: name.clone(), bytes: body.len(), sha256: sha256_hex(body) })
            .collect(),
    }
}

/// Write every artifact and `manifest.json` below `dir`.
pub fn write_all(dir: &Path, cfg: &Resolved, artifacts: &Artifacts) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (name, body) in &artifacts.files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, body)?;
    }
    let mut m = serde_json::to_string_pretty(&manifest(cfg, artifacts)).expect("manifest serializes");
    m.push('\n');
    fs::write(dir.join("manifest.json"), m)?;
    Ok(())
}
