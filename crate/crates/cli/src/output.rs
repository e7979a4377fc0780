//! Output files and their metadata sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes output files into one directory. Every file gets a
/// `<name>.meta.json` sidecar with the tool version, the hash of the run's
/// inputs and the hash of the file itself.
pub struct OutputDir {
    dir: PathBuf,
    command: String,
    inputs: Value,
    input_hash: String,
}

impl OutputDir {
    pub fn create(dir: &Path, command: &str, inputs: Value) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        let canonical = serde_json::to_vec(&inputs).expect("json value");
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            input_hash: sha256_hex(&canonical),
            inputs,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        let meta = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": ndnb::VERSION,
            "command": self.command,
            "file": name,
            "file_sha256": sha256_hex(bytes),
            "input_sha256": self.input_hash,
            "inputs": self.inputs,
        });
        let meta_path = self.dir.join(format!("{name}.meta.json"));
        let text = serde_json::to_string_pretty(&meta).expect("json value") + "\n";
        fs::write(&meta_path, text)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", meta_path.display())))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).expect("serializable output") + "\n";
        self.write(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
        self.write(name, &bytes)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Shortest representation that round-trips exactly.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
