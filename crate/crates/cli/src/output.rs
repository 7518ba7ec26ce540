use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Format;

/// Numeric table written as CSV and/or JSON.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small or large values;
/// integral values print without a fraction.
fn cell(v: f64) -> String {
    if v.is_nan() {
        return String::new();
    }
    let s = format!("{v:?}");
    match s.strip_suffix(".0") {
        Some(int) => int.to_string(),
        None => s,
    }
}

pub struct RunDir {
    pub path: PathBuf,
    formats: Vec<Format>,
    artifacts: Vec<String>,
}

impl RunDir {
    /// Create `base/name`; an existing directory is replaced only with `force`.
    pub fn create(base: &Path, name: &str, force: bool, formats: &[Format]) -> Result<Self> {
        let path = base.join(name);
        if path.exists() {
            if !force {
                bail!(crate::UsageError(format!(
                    "run directory {} already exists; pass --force to overwrite it",
                    path.display()
                )));
            }
            fs::remove_dir_all(&path).with_context(|| format!("removing {}", path.display()))?;
        }
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            path,
            formats: formats.to_vec(),
            artifacts: Vec::new(),
        })
    }

    fn record(&mut self, file: &str) {
        self.artifacts.push(file.to_string());
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    /// Write `stem.csv` and/or `stem.json` according to the configured formats.
    pub fn table(&mut self, stem: &str, table: &Table) -> Result<()> {
        if self.formats.contains(&Format::Csv) {
            let file = format!("{stem}.csv");
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_path(self.path.join(&file))
                .with_context(|| format!("writing {file}"))?;
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(|v| cell(*v)))?;
            }
            w.flush()?;
            self.record(&file);
        }
        if self.formats.contains(&Format::Json) {
            self.json(&format!("{stem}.json"), table)?;
        }
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, file: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path.join(file), text).with_context(|| format!("writing {file}"))?;
        self.record(file);
        Ok(())
    }

    pub fn raw(&mut self, file: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.path.join(file), bytes).with_context(|| format!("writing {file}"))?;
        self.record(file);
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub engine: String,
    pub config_file: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub status: String,
    pub artifacts: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_round_trip() {
        assert_eq!(cell(3.0), "3");
        assert_eq!(cell(0.1), "0.1");
        assert_eq!(cell(f64::NAN), "");
        assert_eq!(cell(-2.5e-8), "-2.5e-8");
        assert_eq!(cell(1e300), "1e300");
        let v = 1.0 / 3.0;
        assert_eq!(cell(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
