// SPDX-License-Identifier: Apache-2.0

//! Register/output-rooted cone extraction with greedy merging.

use std::collections::{BTreeSet, HashMap, HashSet};

use log::warn;

use crate::library::CellLibrary;
use crate::netlist::{Decl, Direction, Driver, Netlist, Port, Signal};

/// A group of gate indices and why it exceeds the cap, if it does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub gates: BTreeSet<usize>,
    pub oversized: bool,
}

/// Fan-in cones in root order: output bits (declaration order), then
/// register data inputs and dangling gate outputs (netlist order).
///
/// A cone holds the combinational gates in the transitive fan-in of its root,
/// stopping at input ports and registers. A register root includes the
/// register itself.
pub fn fanin_cones(n: &Netlist, lib: &CellLibrary) -> Vec<BTreeSet<usize>> {
    let drivers = n.drivers(lib);
    let is_seq = |gi: usize| {
        lib.get(&n.gates[gi].cell_type)
            .is_some_and(|c| c.is_sequential())
    };
    let mut used: HashSet<&str> = HashSet::new();
    for g in &n.gates {
        if let Some(cell) = lib.get(&g.cell_type) {
            for formal in &cell.inputs {
                if let Some(net) = g.pin_map[formal].net() {
                    used.insert(net);
                }
            }
        }
    }
    let output_bits: HashSet<String> = n.output_bits().into_iter().collect();

    let cone_from = |seed_nets: Vec<String>, root_gate: Option<usize>| -> BTreeSet<usize> {
        let mut cone = BTreeSet::new();
        if let Some(r) = root_gate {
            cone.insert(r);
        }
        let mut stack = seed_nets;
        let mut seen: HashSet<String> = HashSet::new();
        while let Some(net) = stack.pop() {
            if !seen.insert(net.clone()) {
                continue;
            }
            if let Some(Driver::Gate(gi)) = drivers.get(&net) {
                if is_seq(*gi) {
                    continue;
                }
                if cone.insert(*gi) {
                    let g = &n.gates[*gi];
                    let cell = lib.get(&g.cell_type).expect("validated netlist");
                    for formal in &cell.inputs {
                        if let Some(inp) = g.pin_map[formal].net() {
                            stack.push(inp.to_string());
                        }
                    }
                }
            }
        }
        cone
    };

    let mut cones = Vec::new();
    for bit in n.output_bits() {
        let c = cone_from(vec![bit], None);
        if !c.is_empty() {
            cones.push(c);
        }
    }
    for (gi, g) in n.gates.iter().enumerate() {
        let cell = lib.get(&g.cell_type).expect("validated netlist");
        let out_net = g.pin_map[&cell.output].net().unwrap_or_default();
        if cell.is_sequential() {
            let seeds = cell
                .inputs
                .iter()
                .filter_map(|f| g.pin_map[f].net().map(str::to_string))
                .collect();
            cones.push(cone_from(seeds, Some(gi)));
        } else if !used.contains(out_net) && !output_bits.contains(out_net) {
            cones.push(cone_from(vec![out_net.to_string()], None));
        }
    }
    cones
}

/// Greedy merge of cones in order while the union stays within `size_cap`.
pub fn partition_gates(cones: &[BTreeSet<usize>], size_cap: usize) -> Vec<Partition> {
    let cap = size_cap.max(1);
    let mut parts: Vec<Partition> = Vec::new();
    let mut current: BTreeSet<usize> = BTreeSet::new();
    for cone in cones {
        let merged: BTreeSet<usize> = current.union(cone).copied().collect();
        if merged.len() <= cap {
            current = merged;
            continue;
        }
        if !current.is_empty() {
            parts.push(Partition {
                gates: std::mem::take(&mut current),
                oversized: false,
            });
        }
        if cone.len() > cap {
            parts.push(Partition {
                gates: cone.clone(),
                oversized: true,
            });
        } else {
            current = cone.clone();
        }
    }
    if !current.is_empty() {
        parts.push(Partition {
            gates: current,
            oversized: false,
        });
    }
    parts
}

/// Splits a netlist into register/output-rooted subcircuits of at most
/// `size_cap` gates. A single cone larger than the cap becomes its own
/// subcircuit and is logged as a warning.
pub fn split_subcircuits(n: &Netlist, lib: &CellLibrary, size_cap: usize) -> Vec<Netlist> {
    let cones = fanin_cones(n, lib);
    let parts = partition_gates(&cones, size_cap);
    for part in parts.iter().filter(|p| p.oversized) {
        warn!(
            "{}: cone of {} gates exceeds cap {size_cap}; kept whole",
            n.name,
            part.gates.len()
        );
    }
    if parts.len() == 1 && parts[0].gates.len() == n.gates.len() {
        return vec![n.clone()];
    }
    parts
        .iter()
        .enumerate()
        .map(|(i, part)| extract(n, lib, &part.gates, &format!("{}_sub{i}", n.name)))
        .collect()
}

fn sanitize(net: &str) -> String {
    net.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect::<String>()
        .trim_end_matches('_')
        .to_string()
}

/// Builds the subcircuit induced by `gates`; nets crossing the cut become ports.
pub fn extract(n: &Netlist, lib: &CellLibrary, gates: &BTreeSet<usize>, name: &str) -> Netlist {
    let drivers = n.drivers(lib);
    let input_bits: HashSet<String> = n.input_bits().into_iter().collect();
    let output_bits: HashSet<String> = n.output_bits().into_iter().collect();

    let mut read_inside: BTreeSet<&str> = BTreeSet::new();
    let mut driven_inside: BTreeSet<&str> = BTreeSet::new();
    let mut read_outside: HashSet<&str> = HashSet::new();
    for (gi, g) in n.gates.iter().enumerate() {
        let cell = lib.get(&g.cell_type).expect("validated netlist");
        let inside = gates.contains(&gi);
        for formal in &cell.inputs {
            if let Some(net) = g.pin_map[formal].net() {
                if inside {
                    read_inside.insert(net);
                } else {
                    read_outside.insert(net);
                }
            }
        }
        if inside {
            if let Some(net) = g.pin_map[&cell.output].net() {
                driven_inside.insert(net);
            }
        }
    }

    // Original ports are kept whole when any of their bits is touched.
    let touched = |p: &Port| {
        p.bits().iter().any(|b| match p.direction {
            Direction::Input => read_inside.contains(b.as_str()),
            Direction::Output => driven_inside.contains(b.as_str()),
        })
    };
    let mut ports: Vec<Port> = n.ports.iter().filter(|p| touched(p)).cloned().collect();
    let mut taken: HashSet<String> = n.ports.iter().map(|p| p.name().to_string()).collect();
    taken.extend(n.wires.iter().map(|w| w.name.clone()));
    let mut rename: HashMap<String, String> = HashMap::new();
    let fresh = |net: &str, taken: &mut HashSet<String>| -> String {
        let base = if net.contains('[') {
            format!("cut_{}", sanitize(net))
        } else {
            net.to_string()
        };
        let mut cand = base.clone();
        let mut k = 1;
        while taken.contains(&cand) && cand != net {
            cand = format!("{base}_{k}");
            k += 1;
        }
        taken.insert(cand.clone());
        cand
    };

    // Inputs: read inside, driven by a gate outside.
    let mut cut_inputs = Vec::new();
    for &net in &read_inside {
        if input_bits.contains(net) || driven_inside.contains(net) {
            continue;
        }
        if matches!(drivers.get(net), Some(Driver::Gate(_))) {
            cut_inputs.push(net);
        }
    }
    // Outputs: driven inside, read outside and not already an output port bit.
    let mut cut_outputs = Vec::new();
    for &net in &driven_inside {
        if read_outside.contains(net) && !output_bits.contains(net) {
            cut_outputs.push(net);
        }
    }
    for (nets, dir) in [
        (cut_inputs, Direction::Input),
        (cut_outputs, Direction::Output),
    ] {
        for net in nets {
            let pname = fresh(net, &mut taken);
            rename.insert(net.to_string(), pname.clone());
            ports.push(Port::new(pname, dir, 1));
        }
    }

    // Wires: declarations that still carry internal nets.
    let wires: Vec<Decl> = n
        .wires
        .iter()
        .filter(|w| {
            w.bits().iter().any(|b| {
                (read_inside.contains(b.as_str()) || driven_inside.contains(b.as_str()))
                    && !rename.contains_key(b)
            })
        })
        .cloned()
        .collect();

    let sub_gates = gates
        .iter()
        .map(|&gi| {
            let mut g = n.gates[gi].clone();
            for sig in g.pin_map.values_mut() {
                if let Signal::Net(net) = sig {
                    if let Some(r) = rename.get(net) {
                        *net = r.clone();
                    }
                }
            }
            g
        })
        .collect();

    Netlist::from_parts(name, ports, wires, sub_gates, lib)
        .expect("subcircuit of a valid netlist is valid")
}
