//! Deterministic result emission: fixed-header CSV rows, the run manifest,
//! and the config hash carried by every row.

use std::path::{Path, PathBuf};

use serde::Serialize;

use cqsw_core::{Error, Result};

/// Version tag carried in the first CSV column; bump when any header changes.
pub const CSV_VERSION: &str = "1";

/// Floats are emitted with 12 significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn fmt_bool(v: bool) -> String {
    if v { "true".into() } else { "false".into() }
}

/// A CSV cell; `None` renders empty.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Quote a string cell when it contains CSV metacharacters.
pub fn fmt_str(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// FNV-1a over the canonical config string; stable across runs and builds.
pub fn config_hash(canonical: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in canonical.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// One CSV document: a fixed header and data rows.
pub struct Csv {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Run manifest: everything needed to reproduce the run byte for byte.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub csv_version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub config_hash: String,
    pub ensemble_source: String,
    pub parameters: serde_json::Value,
}

impl Manifest {
    pub fn new(
        subcommand: &str,
        seed: u64,
        config_hash: &str,
        ensemble_source: &str,
        parameters: serde_json::Value,
    ) -> Self {
        Self {
            artifact: "cqsw",
            version: env!("CARGO_PKG_VERSION"),
            csv_version: CSV_VERSION,
            subcommand: subcommand.to_string(),
            seed,
            config_hash: config_hash.to_string(),
            ensemble_source: ensemble_source.to_string(),
            parameters,
        }
    }
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

/// Write the CSV (and its manifest) to `out`, or the CSV to stdout when no
/// path was given.
pub fn emit(csv: &Csv, manifest: &Manifest, out: Option<&Path>) -> Result<()> {
    let rendered = csv.render();
    match out {
        None => {
            print!("{rendered}");
            Ok(())
        }
        Some(path) => {
            std::fs::write(path, rendered)
                .map_err(|e| Error::InvalidParameter(format!("writing {}: {e}", path.display())))?;
            let mpath = manifest_path(path);
            let body = serde_json::to_string_pretty(manifest)
                .expect("manifest serializes")
                + "\n";
            std::fs::write(&mpath, body)
                .map_err(|e| Error::InvalidParameter(format!("writing {}: {e}", mpath.display())))?;
            Ok(())
        }
    }
}
