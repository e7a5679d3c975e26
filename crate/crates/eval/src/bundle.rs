// SPDX-License-Identifier: Apache-2.0

//! On-disk benchmark bundles.
//!
//! ```text
//! <root>/manifest.json
//! <root>/labels/<design>.json
//! <root>/task{1,2,3}/<design>/netlist.v
//! <root>/task{1,2,3}/<design>/prompt.txt
//! <root>/task{1,2}/<design>/golden.txt
//! <root>/task3/<design>/golden.v
//! <root>/task3/<design>/tb.v
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use netreason_model::embed::Task;
use netreason_model::pred::FunctionLabel;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusConfig, GeneratedDesign};
use crate::error::{EvalError, Result};

/// Label written into every manifest produced by the structural generator.
pub const SYNTHETIC_CORPUS_KIND: &str = "synthetic-structural-lowering";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BenchTask {
    FuncDesc,
    ImplDetail,
    Rtl,
}

impl BenchTask {
    pub const ALL: [BenchTask; 3] = [BenchTask::FuncDesc, BenchTask::ImplDetail, BenchTask::Rtl];

    pub fn number(self) -> u8 {
        match self {
            BenchTask::FuncDesc => 1,
            BenchTask::ImplDetail => 2,
            BenchTask::Rtl => 3,
        }
    }

    pub fn dir_name(self) -> String {
        format!("task{}", self.number())
    }

    pub fn golden_file(self) -> &'static str {
        match self {
            BenchTask::Rtl => "golden.v",
            _ => "golden.txt",
        }
    }

    pub fn parse(s: &str) -> Option<BenchTask> {
        match s {
            "1" | "task1" | "func-desc" => Some(BenchTask::FuncDesc),
            "2" | "task2" | "impl-detail" => Some(BenchTask::ImplDetail),
            "3" | "task3" | "rtl" => Some(BenchTask::Rtl),
            _ => None,
        }
    }

    pub fn is_text(self) -> bool {
        self != BenchTask::Rtl
    }

    pub fn question(self, module: &str) -> String {
        match self {
            BenchTask::FuncDesc => Task::FuncDesc.instruction().to_string(),
            BenchTask::ImplDetail => Task::ImplDetail.instruction().to_string(),
            BenchTask::Rtl => format!(
                "Given this circuit netlist, write equivalent word-level RTL Verilog. \
Keep the module name `{module}` and its ports unchanged."
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkBundle {
    pub task: BenchTask,
    pub design: String,
    pub netlist: String,
    pub prompt: String,
    pub golden: String,
    pub testbench: Option<String>,
}

impl BenchmarkBundle {
    pub fn from_design(task: BenchTask, d: &GeneratedDesign) -> Self {
        BenchmarkBundle {
            task,
            design: d.name().to_string(),
            netlist: d.netlist.source_text.clone(),
            prompt: task.question(d.name()),
            golden: match task {
                BenchTask::FuncDesc => d.func_desc.clone(),
                BenchTask::ImplDetail => d.impl_desc.clone(),
                BenchTask::Rtl => d.rtl.clone(),
            },
            testbench: (task == BenchTask::Rtl).then(|| d.testbench.clone()),
        }
    }

    fn invalid(&self, detail: impl Into<String>) -> EvalError {
        EvalError::Bundle {
            design: self.design.clone(),
            detail: detail.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, text) in [
            ("netlist.v", &self.netlist),
            ("prompt.txt", &self.prompt),
            (self.task.golden_file(), &self.golden),
        ] {
            if text.trim().is_empty() {
                return Err(self.invalid(format!("{what} is empty")));
            }
        }
        match (&self.testbench, self.task) {
            (None, BenchTask::Rtl) => Err(self.invalid("task 3 bundle has no testbench")),
            (Some(tb), BenchTask::Rtl) if tb.trim().is_empty() => {
                Err(self.invalid("tb.v is empty"))
            }
            (Some(tb), BenchTask::Rtl) if !tb.contains(&format!("{} ", self.design)) => {
                Err(self.invalid("testbench does not instantiate the design module"))
            }
            (Some(_), t) if t != BenchTask::Rtl => {
                Err(self.invalid("testbench present on a text task"))
            }
            _ => Ok(()),
        }
    }

    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join(self.task.dir_name()).join(&self.design)
    }

    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        self.validate()?;
        let dir = self.dir(root);
        std::fs::create_dir_all(&dir)?;
        atomic_write(&dir.join("netlist.v"), self.netlist.as_bytes())?;
        atomic_write(&dir.join("prompt.txt"), self.prompt.as_bytes())?;
        atomic_write(&dir.join(self.task.golden_file()), self.golden.as_bytes())?;
        if let Some(tb) = &self.testbench {
            atomic_write(&dir.join("tb.v"), tb.as_bytes())?;
        }
        Ok(dir)
    }

    /// Reads and validates the bundle stored in `dir`.
    pub fn load(task: BenchTask, dir: &Path) -> Result<Self> {
        let design = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let read = |name: &str| -> Result<String> {
            std::fs::read_to_string(dir.join(name)).map_err(|e| EvalError::Bundle {
                design: design.clone(),
                detail: format!("{name}: {e}"),
            })
        };
        let tb_path = dir.join("tb.v");
        let b = BenchmarkBundle {
            task,
            netlist: read("netlist.v")?,
            prompt: read("prompt.txt")?,
            golden: read(task.golden_file())?,
            testbench: if task == BenchTask::Rtl || tb_path.exists() {
                Some(read("tb.v")?)
            } else {
                None
            },
            design,
        };
        b.validate()?;
        Ok(b)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| EvalError::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEntry {
    pub name: String,
    pub gates: usize,
    pub input_bits: u32,
    pub blocks: Vec<String>,
    pub labels: Vec<FunctionLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus: String,
    pub config: CorpusConfig,
    pub designs: Vec<DesignEntry>,
}

pub fn labels_path(root: &Path, design: &str) -> PathBuf {
    root.join("labels").join(format!("{design}.json"))
}

/// Writes all three task bundles, the per-gate labels and `manifest.json`.
pub fn write_corpus(
    root: &Path,
    cfg: &CorpusConfig,
    designs: &[GeneratedDesign],
) -> Result<CorpusManifest> {
    let mut entries = Vec::with_capacity(designs.len());
    for d in designs {
        for task in BenchTask::ALL {
            BenchmarkBundle::from_design(task, d).write(root)?;
        }
        atomic_write(
            &labels_path(root, d.name()),
            serde_json::to_string_pretty(&d.label_map())?.as_bytes(),
        )?;
        entries.push(DesignEntry {
            name: d.name().to_string(),
            gates: d.netlist.gates.len(),
            input_bits: d.spec.inputs.iter().map(|(_, b)| b).sum(),
            blocks: d
                .spec
                .blocks
                .iter()
                .map(|b| b.kind.short().to_string())
                .collect(),
            labels: d.spec.labels(),
        });
    }
    let manifest = CorpusManifest {
        corpus: SYNTHETIC_CORPUS_KIND.to_string(),
        config: cfg.clone(),
        designs: entries,
    };
    atomic_write(
        &root.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(manifest)
}

pub fn load_manifest(root: &Path) -> Result<CorpusManifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(
        root.join("manifest.json"),
    )?)?)
}

/// All bundles of one task under `root`, sorted by design name.
pub fn load_bundles(root: &Path, task: BenchTask) -> Result<Vec<BenchmarkBundle>> {
    let dir = root.join(task.dir_name());
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    dirs.retain(|p| p.is_dir());
    dirs.sort();
    dirs.iter()
        .map(|p| BenchmarkBundle::load(task, p))
        .collect()
}

pub fn load_labels(root: &Path, design: &str) -> Result<BTreeMap<String, FunctionLabel>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(
        labels_path(root, design),
    )?)?)
}
