//! Report emission: CSV tables, JSON summaries, and a run manifest.
//!
//! CSV is the interchange format; every file has a header row and all
//! numbers carry 17 significant digits so that re-parsing is lossless.
//! Each run writes a `manifest.json` echoing the configuration, the seed,
//! the crate version, and a SHA-256 checksum per emitted file, making runs
//! byte-reproducible and verifiable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Lossless float formatting: 17 significant digits, scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// An in-memory CSV table with a mandatory header.
#[derive(Debug, Clone)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(header: I) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Append a row of already formatted cells; must match the header width.
    pub fn push_row<S: Into<String>, I: IntoIterator<Item = S>>(&mut self, cells: I) {
        let row: Vec<String> = cells.into_iter().map(Into::into).collect();
        assert_eq!(row.len(), self.header.len(), "row width mismatch");
        self.rows.push(row);
    }

    /// Append a row of floats formatted with 17 significant digits.
    pub fn push_floats<I: IntoIterator<Item = f64>>(&mut self, cells: I) {
        self.push_row(cells.into_iter().map(fmt_float));
    }

    pub fn to_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string())?;
        Ok(())
    }
}

/// Write a JSON summary with stable key order (serde preserves struct order).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| crate::error::Error::Config(format!("json serialization: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Serialize)]
struct ManifestFile {
    name: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    version: String,
    experiment: String,
    seed: u64,
    config: String,
    files: Vec<ManifestFile>,
}

/// Write `manifest.json` next to the emitted files, checksumming each one.
pub fn write_manifest(
    out_dir: &Path,
    experiment: &str,
    seed: u64,
    config_echo: &str,
    files: &[PathBuf],
) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let bytes = fs::read(f)?;
        entries.push(ManifestFile {
            name: f
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: experiment.to_string(),
        seed,
        config: config_echo.to_string(),
        files: entries,
    };
    let path = out_dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}
