// SPDX-License-Identifier: Apache-2.0

//! Output directories, atomic writes and the `run.json` manifest that
//! accompanies every artifact directory.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub config: Value,
    pub inputs: Vec<String>,
    /// Optimizer steps, for training stages.
    pub steps: Option<usize>,
    pub final_loss: Option<f64>,
    pub artifacts: Vec<String>,
}

/// SHA-256 of the compact JSON form; object keys are already sorted.
pub fn config_hash(config: &Value) -> String {
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

impl Manifest {
    pub fn new<C: Serialize>(
        stage: &str,
        seed: Option<u64>,
        config: &C,
        inputs: &[&Path],
    ) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Json {
            path: PathBuf::from(MANIFEST_FILE),
            source: e,
        })?;
        Ok(Manifest {
            tool: "netreason".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            stage: stage.into(),
            seed,
            config_hash: config_hash(&config),
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            steps: None,
            final_loss: None,
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        self.artifacts.sort();
        self.artifacts.dedup();
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    netreason_eval::bundle::atomic_write(path, bytes).map_err(|e| match e {
        netreason_eval::EvalError::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn absolute(p: &Path) -> PathBuf {
    let p = if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().unwrap_or_default().join(p)
    };
    p.canonicalize().unwrap_or(p)
}

/// Output directory under construction. Artifacts are written into a
/// hidden sibling directory that replaces `out` on [`Staging::commit`];
/// dropping it uncommitted removes everything written so far.
pub struct Staging {
    out: PathBuf,
    tmp: tempfile::TempDir,
    force: bool,
}

impl Staging {
    pub fn path(&self) -> &Path {
        self.tmp.path()
    }

    pub fn commit(self) -> Result<()> {
        if self.out.exists() {
            let empty = std::fs::read_dir(&self.out)
                .map_err(|e| CliError::io(&self.out, e))?
                .next()
                .is_none();
            if !empty && !self.force {
                return Err(CliError::usage(format!(
                    "output directory {} appeared during the run",
                    self.out.display()
                )));
            }
            std::fs::remove_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        }
        let tmp = self.tmp.keep();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(&tmp, std::fs::Permissions::from_mode(0o755))
                .map_err(|e| CliError::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, &self.out).map_err(|e| CliError::io(&self.out, e))
    }
}

/// Checks that `out` does not overlap any input and is empty or absent
/// (or `force` is set), then opens a staging directory next to it.
pub fn prepare_out_dir(out: &Path, inputs: &[&Path], force: bool) -> Result<Staging> {
    let o = absolute(out);
    for i in inputs {
        let i = absolute(i);
        if o.starts_with(&i) || i.starts_with(&o) {
            return Err(CliError::usage(format!(
                "output {} overlaps input {}; outputs never modify inputs",
                out.display(),
                i.display()
            )));
        }
    }
    if out.exists() {
        if !out.is_dir() {
            return Err(CliError::usage(format!(
                "output {} exists and is not a directory",
                out.display()
            )));
        }
        let non_empty = std::fs::read_dir(out)
            .map_err(|e| CliError::io(out, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::usage(format!(
                "output directory {} is not empty (use --force)",
                out.display()
            )));
        }
    }
    let parent = o
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    let tmp = tempfile::Builder::new()
        .prefix(".netreason-staging-")
        .tempdir_in(&parent)
        .map_err(|e| CliError::io(&parent, e))?;
    Ok(Staging { out: o, tmp, force })
}

pub fn require_dir(p: &Path, what: &str) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{what} {} is not a directory",
            p.display()
        )))
    }
}

pub fn require_file(p: &Path, what: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{what} {} does not exist",
            p.display()
        )))
    }
}

/// File stem as a design name.
pub fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Sorted `*.<ext>` files directly under `dir`, skipping the manifest.
pub fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|x| x == ext)
                && p.file_name().map_or(true, |n| n != MANIFEST_FILE)
        })
        .collect();
    v.sort();
    Ok(v)
}
