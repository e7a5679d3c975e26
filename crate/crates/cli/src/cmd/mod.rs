// SPDX-License-Identifier: Apache-2.0

pub mod corpus;
pub mod evaluate;
pub mod pipeline;
pub mod train;

use std::path::Path;

use netreason_core::{parse_netlist, CellLibrary, Netlist};
use netreason_eval::bundle::{load_bundles, BenchTask};

use crate::error::{CliError, Result};

pub fn parse_task(s: &str) -> Result<BenchTask> {
    BenchTask::parse(s)
        .ok_or_else(|| CliError::usage(format!("unknown task `{s}` (expected 1, 2 or 3)")))
}

/// Design names and parsed netlists of one task directory, sorted by name.
pub fn corpus_netlists(root: &Path, task: BenchTask) -> Result<Vec<(String, Netlist)>> {
    let lib = CellLibrary::builtin();
    load_bundles(root, task)?
        .into_iter()
        .map(|b| Ok((b.design, parse_netlist(&b.netlist, &lib)?)))
        .collect()
}
