//! Flat key-value configuration with `[section]` headers.
//!
//! The format is line-oriented so configs diff and hash cleanly:
//!
//! ```text
//! [market]
//! mu_f = 0.01
//! # comments and blank lines are ignored
//! ```
//!
//! Keys are exposed as `section.key`. `--set section.key=value` flags
//! override file values; insertion order is preserved so strategy
//! sections run in the order written.

use crate::CliError;
use std::collections::HashMap;

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: Vec<(String, String)>,
    index: HashMap<String, usize>,
    /// Raw text the config was parsed from (for hashing).
    pub raw: String,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Config { raw: text.to_string(), ..Default::default() };
        let mut section = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(CliError::config(format!("line {}: empty section", lineno + 1)));
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    lineno + 1
                )));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::config(format!("line {}: empty key", lineno + 1)));
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            cfg.set(&full, value.trim());
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Set (or override) a key. Overrides keep the original position so
    /// ordering stays stable.
    pub fn set(&mut self, key: &str, value: &str) {
        if let Some(&i) = self.index.get(key) {
            self.entries[i].1 = value.to_string();
        } else {
            self.index.insert(key.to_string(), self.entries.len());
            self.entries.push((key.to_string(), value.to_string()));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.index.get(key).map(|&i| self.entries[i].1.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::config(format!("missing config key {key:?}")))
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| CliError::config(format!("key {key:?}: {s:?} is not a number"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| CliError::config(format!("key {key:?}: {s:?} is not an integer"))),
        }
    }

    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split(',')
                .map(|t| {
                    t.trim().parse().map_err(|_| {
                        CliError::config(format!("key {key:?}: {t:?} is not a number"))
                    })
                })
                .collect(),
        }
    }

    /// Section names appearing under `strategy.<name>.<field>` keys, in
    /// first-appearance order.
    pub fn strategy_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (k, _) in &self.entries {
            if let Some(rest) = k.strip_prefix("strategy.") {
                if let Some((name, _)) = rest.rsplit_once('.') {
                    if !names.iter().any(|n| n == name) {
                        names.push(name.to_string());
                    }
                }
            }
        }
        names
    }

    /// Keys of the form `data.asset.<symbol>` in order: (symbol, path).
    pub fn asset_paths(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .filter_map(|(k, v)| {
                k.strip_prefix("data.asset.")
                    .map(|sym| (sym.to_string(), v.clone()))
            })
            .collect()
    }
}
