use std::fs;
use std::path::{Path, PathBuf};

use fieldeq::simulate::fmt_num;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Writes files into one directory and remembers their names for the
/// manifest.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// `manifest.csv` listing everything written so far.
    pub fn finish(mut self, manifest: &Manifest) -> Result<(), CliError> {
        let mut files = self.files.clone();
        files.push("manifest.csv".into());
        let mut rows = KeyValues::new();
        rows.text("tool", env!("CARGO_PKG_NAME"));
        rows.text("version", env!("CARGO_PKG_VERSION"));
        rows.text("command", &manifest.command);
        rows.text("config_hash", &manifest.config_hash);
        rows.text("seed", manifest.seed.to_string());
        rows.text("outputs", files.join(";"));
        self.write("manifest.csv", rows.to_csv().as_bytes())
    }
}

/// Run metadata recorded next to every output set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// Subcommand with its flags, without the output directory.
    pub command: String,
    /// SHA-256 of the canonical scenario text.
    pub config_hash: String,
    pub seed: u64,
}

pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Ordered `key,value` rows.
#[derive(Debug, Default, Clone)]
pub struct KeyValues {
    rows: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, key: &str, value: impl Into<String>) {
        self.rows.push((key.to_string(), value.into()));
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.text(key, fmt_num(value));
    }

    pub fn opt_num(&mut self, key: &str, value: Option<f64>) {
        self.text(key, value.map_or_else(|| "none".to_string(), fmt_num));
    }

    pub fn flag(&mut self, key: &str, value: bool) {
        self.text(key, value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.rows.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn rows(&self) -> &[(String, String)] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        for (k, v) in &self.rows {
            s.push_str(k);
            s.push(',');
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}
