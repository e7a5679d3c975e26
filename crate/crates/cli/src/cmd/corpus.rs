// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use netreason_core::{
    build_tag_graph, emit_verilog, parse_netlist, split_subcircuits, CellLibrary, NodeKind,
};
use netreason_eval::bundle::write_corpus;
use netreason_eval::corpus::{generate_synthetic_corpus, CorpusConfig};
use serde::Serialize;

use crate::args::{GenCorpusArgs, IngestArgs, SplitArgs};
use crate::error::{CliError, Result};
use crate::manifest::{
    prepare_out_dir, read_text, require_file, stem, write_bytes, write_json, Manifest,
};

pub fn gen_corpus(a: &GenCorpusArgs) -> Result<()> {
    if a.designs == 0 {
        return Err(CliError::usage("--designs must be at least 1"));
    }
    if a.min_width < 1 || a.min_width > a.max_width || a.max_width > 16 {
        return Err(CliError::usage(
            "widths must satisfy 1 <= --min-width <= --max-width <= 16",
        ));
    }
    if !(1..=3).contains(&a.max_blocks) {
        return Err(CliError::usage("--max-blocks must be 1, 2 or 3"));
    }
    let staging = prepare_out_dir(&a.out, &[], a.force)?;
    let out = staging.path();
    let cfg = CorpusConfig {
        seed: a.seed,
        designs: a.designs,
        min_width: a.min_width,
        max_width: a.max_width,
        max_blocks: a.max_blocks,
        ..CorpusConfig::default()
    };
    let lib = CellLibrary::builtin();
    let designs = generate_synthetic_corpus(&cfg, &lib)?;
    let corpus = write_corpus(out, &cfg, &designs)?;
    let mut m = Manifest::new("gen-corpus", Some(a.seed), &cfg, &[])?;
    m.artifacts = vec![
        "manifest.json".into(),
        "labels".into(),
        "task1".into(),
        "task2".into(),
        "task3".into(),
    ];
    m.write(out)?;
    staging.commit()?;
    log::info!(
        "wrote {} designs ({}) to {}",
        corpus.designs.len(),
        corpus.corpus,
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct GraphSummary {
    module: String,
    source: String,
    gates: usize,
    nodes: usize,
    combinational_edges: usize,
    inputs: usize,
    outputs: usize,
    registers: usize,
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    for p in &a.netlists {
        require_file(p, "netlist")?;
    }
    let inputs: Vec<&Path> = a.netlists.iter().map(|p| p.as_path()).collect();
    let staging = prepare_out_dir(&a.out, &inputs, false)?;
    let out = staging.path();
    let lib = CellLibrary::builtin();
    let mut m = Manifest::new(
        "ingest",
        None,
        &serde_json::json!({ "library": "builtin" }),
        &inputs,
    )?;
    let mut summaries = Vec::new();
    for p in &a.netlists {
        let n = parse_netlist(&read_text(p)?, &lib)?;
        let g = build_tag_graph(&n, &lib)?;
        write_bytes(
            &out.join(format!("{}.v", n.name)),
            emit_verilog(&n).as_bytes(),
        )?;
        write_bytes(
            &out.join(format!("{}.graph.txt", n.name)),
            g.dump().as_bytes(),
        )?;
        m.artifacts.push(format!("{}.v", n.name));
        m.artifacts.push(format!("{}.graph.txt", n.name));
        summaries.push(GraphSummary {
            module: n.name.clone(),
            source: p.display().to_string(),
            gates: n.gates.len(),
            nodes: g.len(),
            combinational_edges: g.combinational_edges().count(),
            inputs: g.count(NodeKind::PrimaryInput),
            outputs: g.count(NodeKind::PrimaryOutput),
            registers: g.count(NodeKind::Register),
        });
    }
    write_json(&out.join("summary.json"), &summaries)?;
    m.artifacts.push("summary.json".into());
    m.write(out)?;
    staging.commit()
}

pub fn split(a: &SplitArgs) -> Result<()> {
    require_file(&a.netlist, "netlist")?;
    if a.cap == 0 {
        return Err(CliError::usage("--cap must be at least 1"));
    }
    let staging = prepare_out_dir(&a.out, &[&a.netlist], false)?;
    let out = staging.path();
    let lib = CellLibrary::builtin();
    let n = parse_netlist(&read_text(&a.netlist)?, &lib)?;
    let parts = split_subcircuits(&n, &lib, a.cap);
    let mut m = Manifest::new(
        "split",
        None,
        &serde_json::json!({ "cap": a.cap }),
        &[&a.netlist],
    )?;
    for part in &parts {
        let file = format!("{}.v", part.name);
        write_bytes(&out.join(&file), emit_verilog(part).as_bytes())?;
        m.artifacts.push(file);
    }
    log::info!(
        "{}: {} gates in {} subcircuits",
        stem(&a.netlist),
        n.gates.len(),
        parts.len()
    );
    m.write(out)?;
    staging.commit()
}
