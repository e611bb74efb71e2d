//! Flat `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. Keys
//! are the long flag names without the leading dashes; underscores and
//! dashes are interchangeable. Values may be wrapped in double quotes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Every key accepted in a config file. Keys that do not apply to the
/// running command are ignored so one file can drive a whole pipeline.
pub const KNOWN_KEYS: &[&str] = &[
    "train-file",
    "test-file",
    "synthetic",
    "validation-fraction",
    "users",
    "items",
    "latent-dim",
    "popularity-exponent",
    "popularity-mix",
    "interactions-per-user",
    "test-items-per-user",
    "affinity-temperature",
    "loss",
    "dim",
    "layers",
    "lr",
    "batch-size",
    "epochs",
    "min-epochs",
    "patience",
    "eval-every",
    "temperature",
    "l2",
    "p",
    "k",
    "groups",
    "seed",
    "out",
    "threads",
    "embeddings",
    "p-grid",
    "popular-fraction",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    path: PathBuf,
    entries: BTreeMap<String, Entry>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                bail!("{}:{line}: expected `key = value`, found {content:?}", path.display());
            };
            let key = normalize_key(key);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("{}:{line}: unknown key {key:?}", path.display());
            }
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            if value.is_empty() {
                bail!("{}:{line}: key {key:?} has an empty value", path.display());
            }
            let entry = Entry {
                value: value.to_string(),
                line,
            };
            if let Some(prev) = entries.insert(key.clone(), entry) {
                bail!(
                    "{}:{line}: key {key:?} already set on line {}",
                    path.display(),
                    prev.line
                );
            }
        }
        Ok(ConfigFile {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
