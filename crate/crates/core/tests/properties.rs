// SPDX-License-Identifier: Apache-2.0

mod oracle;

use std::collections::BTreeSet;

use netreason_core::random::{random_netlist, RandomNetlistConfig};
use netreason_core::{
    build_tag_graph, derive_gate_expr, emit_verilog, parse_netlist, split_subcircuits,
    strip_comments, truth_table, CellLibrary, Gate, NetlistBuilder, NetlistError, NodeKind, Signal,
};
use oracle::scan_counts;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Documented function of every built-in cell, written independently of the
/// library templates.
fn documented(cell: &str, x: &[bool]) -> bool {
    let all = |v: &[bool]| v.iter().all(|&b| b);
    let any = |v: &[bool]| v.iter().any(|&b| b);
    let par = |v: &[bool]| v.iter().filter(|&&b| b).count() % 2 == 1;
    match cell {
        "INV" => !x[0],
        "BUF" => x[0],
        "AND2" | "AND3" | "AND4" => all(x),
        "NAND2" | "NAND3" | "NAND4" => !all(x),
        "OR2" | "OR3" | "OR4" => any(x),
        "NOR2" | "NOR3" | "NOR4" => !any(x),
        "XOR2" | "XOR3" => par(x),
        "XNOR2" | "XNOR3" => !par(x),
        "AOI21" => !((x[0] && x[1]) || x[2]),
        "AOI22" => !((x[0] && x[1]) || (x[2] && x[3])),
        "OAI21" => !((x[0] || x[1]) && x[2]),
        "OAI22" => !((x[0] || x[1]) && (x[2] || x[3])),
        "MUX2" => {
            if x[2] {
                x[1]
            } else {
                x[0]
            }
        }
        other => panic!("no documented function for {other}"),
    }
}

#[test]
fn every_library_cell_matches_its_documented_truth_table() {
    let lib = CellLibrary::builtin();
    for cell in lib.cells().filter(|c| !c.is_sequential()) {
        // distinct net names in pin order; "i0" < "i1" < ... keeps support order = pin order
        let pins: Vec<(String, Signal)> = cell
            .inputs
            .iter()
            .enumerate()
            .map(|(k, p)| (p.clone(), Signal::Net(format!("i{k}"))))
            .chain(std::iter::once((
                cell.output.clone(),
                Signal::Net("o".into()),
            )))
            .collect();
        let g = Gate::new("u", cell.name.clone(), pins);
        let tt = truth_table(&derive_gate_expr(&g, &lib).unwrap()).unwrap();
        let k = cell.inputs.len();
        assert_eq!(tt.bits.len(), 1 << k, "{}", cell.name);
        for row in 0..(1usize << k) {
            let x: Vec<bool> = (0..k).map(|j| (row >> (k - 1 - j)) & 1 == 1).collect();
            assert_eq!(
                tt.bits[row],
                documented(&cell.name, &x),
                "{} row {row}",
                cell.name
            );
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_emit_round_trip(seed in any::<u64>()) {
        let lib = CellLibrary::builtin();
        let n = random_netlist(&mut rng(seed), &lib, &RandomNetlistConfig::default(), "r");
        let text = emit_verilog(&n);
        let back = parse_netlist(&text, &lib).unwrap();
        prop_assert!(back.structure_eq(&n));
        prop_assert_eq!(emit_verilog(&back), text);
    }

    #[test]
    fn graph_counts_match_text_scan(seed in any::<u64>()) {
        let lib = CellLibrary::builtin();
        let n = random_netlist(&mut rng(seed), &lib, &RandomNetlistConfig::default(), "r");
        let g = build_tag_graph(&n, &lib).unwrap();
        prop_assert_eq!((g.len(), g.edges.len()), scan_counts(&n.source_text, &lib));
        prop_assert_eq!(g.topological_order().unwrap().len(), g.len());
    }

    #[test]
    fn injected_second_driver_is_rejected(seed in any::<u64>()) {
        let lib = CellLibrary::builtin();
        let n = random_netlist(&mut rng(seed), &lib, &RandomNetlistConfig::default(), "r");
        prop_assume!(!n.gates.is_empty());
        let victim = &n.gates[(seed as usize) % n.gates.len()];
        let cell = lib.get(&victim.cell_type).unwrap();
        let out = victim.pin_map[&cell.output].clone();
        let first_input = n.input_bits()[0].clone();
        let line = format!("  BUF dup_driver (.A({first_input}), .Y({out}));\nendmodule\n");
        let text = n.source_text.replace("endmodule\n", &line);
        prop_assert_eq!(parse_netlist(&text, &lib).unwrap_err(), NetlistError::MultipleDrivers(out.to_string()));
    }

    #[test]
    fn split_covers_all_gates(seed in any::<u64>(), cap in 1usize..12) {
        let lib = CellLibrary::builtin();
        let n = random_netlist(&mut rng(seed), &lib, &RandomNetlistConfig::default(), "r");
        let cones = netreason_core::split::fanin_cones(&n, &lib);
        let parts = netreason_core::split::partition_gates(&cones, cap);
        let subs = split_subcircuits(&n, &lib, cap);
        let mut covered = BTreeSet::new();
        for (p, s) in parts.iter().zip(&subs) {
            prop_assert!(p.gates.len() <= cap || p.oversized);
            covered.extend(s.gates.iter().map(|g| g.instance_name.clone()));
            // each piece is itself a valid netlist
            let again = parse_netlist(&s.source_text, &lib).unwrap();
            prop_assert!(again.structure_eq(s));
        }
        let all: BTreeSet<String> = n.gates.iter().map(|g| g.instance_name.clone()).collect();
        prop_assert_eq!(covered, all);
    }

    #[test]
    fn comments_never_change_structure(seed in any::<u64>()) {
        let lib = CellLibrary::builtin();
        let n = random_netlist(&mut rng(seed), &lib, &RandomNetlistConfig::default(), "r");
        let noisy: String = n.source_text.lines().map(|l| format!("{l} // func: adder (p=0.50)\n")).collect();
        let parsed = parse_netlist(&noisy, &lib).unwrap();
        prop_assert!(parsed.structure_eq(&n));
        prop_assert!(parse_netlist(&strip_comments(&noisy), &lib).unwrap().structure_eq(&n));
    }
}

#[test]
fn loop_rejection_agrees_with_topological_sort() {
    let lib = CellLibrary::builtin();
    for k in 2..6 {
        // ring of k inverters fed through an AND, with and without a register on the ring
        for with_reg in [false, true] {
            let mut b = NetlistBuilder::new("ring");
            let a = b.input("a", 1);
            let y = b.output("y", 1);
            let ring: Vec<String> = (0..k).map(|_| b.fresh_wire()).collect();
            b.cell_to(&lib, "AND2", &[&a[0], &ring[k - 1]], &ring[0])
                .unwrap();
            for i in 1..k {
                if with_reg && i == 1 {
                    b.cell_to(&lib, "DFF", &[&a[0], &ring[0]], &ring[1])
                        .unwrap();
                } else {
                    b.cell_to(&lib, "INV", &[&ring[i - 1]], &ring[i]).unwrap();
                }
            }
            b.bind_output(&y[0], &ring[0]);
            let (n, _) = b.finish(&lib).unwrap();
            let res = build_tag_graph(&n, &lib);
            assert_eq!(res.is_ok(), with_reg, "k={k}");
            if let Err(NetlistError::CombinationalLoop(path)) = res {
                assert_eq!(path.len(), k + 1);
                assert_eq!(path.first(), path.last());
            }
        }
    }
}

/// Two-stage pipelined array multiplier: partial products registered, then summed.
fn pipelined_multiplier(width: usize, lib: &CellLibrary) -> netreason_core::Netlist {
    let mut b = NetlistBuilder::new("pmul");
    let clk = b.input("clk", 1);
    let a = b.input("a", width);
    let x = b.input("b", width);
    let p = b.output("p", 2 * width);
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (j, bj) in x.iter().enumerate() {
        let mut row = vec![None; 2 * width];
        for (i, ai) in a.iter().enumerate() {
            let (_, pp) = b.cell(lib, "AND2", &[ai, bj]).unwrap();
            let q = b.fresh_wire();
            b.cell_to(lib, "DFF", &[&clk[0], &pp], &q).unwrap();
            row[i + j] = Some(q);
        }
        rows.push(row.into_iter().map(|r| r.unwrap_or_default()).collect());
    }
    // ripple-add the rows
    let mut acc: Vec<Option<String>> = rows[0]
        .iter()
        .map(|s| (!s.is_empty()).then(|| s.clone()))
        .collect();
    for row in &rows[1..] {
        let mut carry: Option<String> = None;
        let mut next = Vec::new();
        for k in 0..2 * width {
            let ins: Vec<String> = [
                acc[k].clone(),
                (!row[k].is_empty()).then(|| row[k].clone()),
                carry.take(),
            ]
            .into_iter()
            .flatten()
            .collect();
            match ins.len() {
                0 => next.push(None),
                1 => next.push(Some(ins[0].clone())),
                2 => {
                    let (_, s) = b.cell(lib, "XOR2", &[&ins[0], &ins[1]]).unwrap();
                    let (_, c) = b.cell(lib, "AND2", &[&ins[0], &ins[1]]).unwrap();
                    next.push(Some(s));
                    carry = Some(c);
                }
                _ => {
                    let (_, s) = b.cell(lib, "XOR3", &[&ins[0], &ins[1], &ins[2]]).unwrap();
                    let (_, t) = b
                        .cell(lib, "AOI22", &[&ins[0], &ins[1], &ins[2], &ins[0]])
                        .unwrap();
                    let (_, u) = b.cell(lib, "NAND2", &[&ins[1], &ins[2]]).unwrap();
                    let (_, c) = b.cell(lib, "NAND2", &[&t, &u]).unwrap();
                    next.push(Some(s));
                    carry = Some(c);
                }
            }
        }
        acc = next;
    }
    for (k, bit) in p.iter().enumerate() {
        match &acc[k] {
            Some(net) => b.bind_output(bit, net),
            None => {
                b.cell_sig(lib, "BUF", &[Signal::Const(false)], bit)
                    .unwrap();
            }
        }
    }
    b.finish(lib).unwrap().0
}

#[test]
fn pipelined_multiplier_split_coverage() {
    let lib = CellLibrary::builtin();
    let n = pipelined_multiplier(4, &lib);
    let g = build_tag_graph(&n, &lib).unwrap();
    assert_eq!(g.count(NodeKind::Register), 16);
    for cap in [1, 4, 10, 25, 1000] {
        let subs = split_subcircuits(&n, &lib, cap);
        let mut covered = BTreeSet::new();
        for s in &subs {
            assert!(s.gates.len() <= cap || subs.len() > 1 || cap >= n.gates.len());
            covered.extend(s.gates.iter().map(|g| g.instance_name.clone()));
            build_tag_graph(s, &lib).unwrap();
        }
        assert_eq!(covered.len(), n.gates.len(), "cap {cap}");
    }
}

#[test]
fn combinational_design_under_cap_is_returned_unchanged() {
    let lib = CellLibrary::builtin();
    let mut r = rng(11);
    let cfg = RandomNetlistConfig {
        max_registers: 0,
        max_gates: 10,
        ..Default::default()
    };
    let n = random_netlist(&mut r, &lib, &cfg, "c10");
    let subs = split_subcircuits(&n, &lib, 100);
    assert_eq!(subs.len(), 1);
    assert!(subs[0].structure_eq(&n));
}
