//! Run manifest: a plain key-value record of what produced the outputs.
//!
//! Every command writes `manifest.txt` into its output directory with
//! the command name, the config hash, the seed (when one applies), and
//! content hashes of every input and output file. Two runs are
//! byte-identical exactly when their manifests agree on output hashes.

use crate::CliError;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

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

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Default)]
pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest::default();
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn record_config(&mut self, raw: &str) {
        self.push("config_hash", format!("sha256:{}", sha256_hex(raw.as_bytes())));
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.push(
            &format!("input.{}", file_label(path)),
            format!("sha256:{}", hash_file(path)?),
        );
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<(), CliError> {
        self.push(
            &format!("output.{}", file_label(path)),
            format!("sha256:{}", hash_file(path)?),
        );
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let mut text = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(text, "{k} = {v}");
        }
        let path = out_dir.join("manifest.txt");
        std::fs::write(&path, text)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
