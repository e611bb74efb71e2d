//! Run directories. A run never writes into a directory that already holds
//! files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Uses `requested` when given (absent or empty), otherwise a fresh
    /// `runs/<command>-<unix seconds>[-n]` directory.
    pub fn create(requested: Option<&Path>, command: &str) -> Result<Self> {
        let path = match requested {
            Some(p) => {
                if p.exists() {
                    let mut entries = fs::read_dir(p)
                        .with_context(|| format!("cannot read output directory {}", p.display()))?;
                    if entries.next().is_some() {
                        bail!(
                            "output directory {} is not empty; refusing to overwrite",
                            p.display()
                        );
                    }
                }
                p.to_path_buf()
            }
            None => {
                let secs = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                let stem = format!("{command}-{secs}");
                let mut candidate = Path::new("runs").join(&stem);
                let mut n = 1;
                while candidate.exists() {
                    candidate = Path::new("runs").join(format!("{stem}-{n}"));
                    n += 1;
                }
                candidate
            }
        };
        fs::create_dir_all(&path)
            .with_context(|| format!("cannot create output directory {}", path.display()))?;
        Ok(RunDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.file(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// Shortest round-trip decimal; empty for a missing value.
pub fn cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}
