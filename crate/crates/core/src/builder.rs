// SPDX-License-Identifier: Apache-2.0

//! Programmatic netlist construction.

use std::collections::HashMap;

use crate::error::{NetlistError, Result};
use crate::library::CellLibrary;
use crate::netlist::{Decl, Direction, Gate, Netlist, Port, Signal};

/// Incrementally builds a netlist from cell instances over fresh wires.
///
/// Output port bits are bound at the end with [`NetlistBuilder::bind_output`];
/// the bound net is renamed to the port bit, or buffered when it cannot be
/// renamed (an input bit, or a net already bound to another output).
#[derive(Debug, Clone)]
pub struct NetlistBuilder {
    name: String,
    ports: Vec<Port>,
    wires: Vec<String>,
    gates: Vec<Gate>,
    bindings: Vec<(String, String)>,
    next_wire: usize,
    next_gate: usize,
    next_reg: usize,
}

impl NetlistBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistBuilder {
            name: name.into(),
            ports: Vec::new(),
            wires: Vec::new(),
            gates: Vec::new(),
            bindings: Vec::new(),
            next_wire: 0,
            next_gate: 0,
            next_reg: 0,
        }
    }

    /// Declares an input port; returns its bit nets, lsb first.
    pub fn input(&mut self, name: &str, width: usize) -> Vec<String> {
        let p = Port::new(name, Direction::Input, width);
        let bits = p.bits();
        self.ports.push(p);
        bits
    }

    /// Declares an output port; returns its bit nets, lsb first.
    pub fn output(&mut self, name: &str, width: usize) -> Vec<String> {
        let p = Port::new(name, Direction::Output, width);
        let bits = p.bits();
        self.ports.push(p);
        bits
    }

    pub fn fresh_wire(&mut self) -> String {
        let w = format!("n{}", self.next_wire);
        self.next_wire += 1;
        self.wires.push(w.clone());
        w
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    /// Instantiates a combinational cell on `inputs` (library input order)
    /// driving a fresh wire. Returns (gate index, output net).
    pub fn cell(
        &mut self,
        lib: &CellLibrary,
        cell_type: &str,
        inputs: &[&str],
    ) -> Result<(usize, String)> {
        let out = self.fresh_wire();
        let idx = self.cell_to(lib, cell_type, inputs, &out)?;
        Ok((idx, out))
    }

    /// Instantiates a cell driving the given net.
    pub fn cell_to(
        &mut self,
        lib: &CellLibrary,
        cell_type: &str,
        inputs: &[&str],
        out: &str,
    ) -> Result<usize> {
        let sigs: Vec<Signal> = inputs.iter().map(|s| Signal::Net(s.to_string())).collect();
        self.cell_sig(lib, cell_type, &sigs, out)
    }

    pub fn cell_sig(
        &mut self,
        lib: &CellLibrary,
        cell_type: &str,
        inputs: &[Signal],
        out: &str,
    ) -> Result<usize> {
        let cell = lib.cell(cell_type)?;
        if cell.inputs.len() != inputs.len() {
            return Err(NetlistError::PinMismatch {
                instance: format!("<{cell_type}>"),
                detail: format!(
                    "expected {} inputs, got {}",
                    cell.inputs.len(),
                    inputs.len()
                ),
            });
        }
        let name = if cell.is_sequential() {
            self.next_reg += 1;
            format!("r{}", self.next_reg - 1)
        } else {
            self.next_gate += 1;
            format!("g{}", self.next_gate - 1)
        };
        let pins = cell
            .inputs
            .iter()
            .cloned()
            .zip(inputs.iter().cloned())
            .chain(std::iter::once((
                cell.output.clone(),
                Signal::Net(out.to_string()),
            )));
        self.gates.push(Gate::new(name, cell_type, pins));
        Ok(self.gates.len() - 1)
    }

    /// Requests that output bit `port_bit` carry the value of `net`.
    pub fn bind_output(&mut self, port_bit: &str, net: &str) {
        self.bindings.push((port_bit.to_string(), net.to_string()));
    }

    /// Resolves output bindings and validates. Returns the netlist and, for
    /// every gate, the index of the gate it was created as (buffers added for
    /// bindings map to `None`).
    pub fn finish(mut self, lib: &CellLibrary) -> Result<(Netlist, Vec<Option<usize>>)> {
        let mut origin: Vec<Option<usize>> = (0..self.gates.len()).map(Some).collect();
        let mut renamed: HashMap<String, String> = HashMap::new();
        let input_bits: Vec<String> = self
            .ports
            .iter()
            .filter(|p| p.direction == Direction::Input)
            .flat_map(Port::bits)
            .collect();
        let bindings = std::mem::take(&mut self.bindings);
        for (bit, net) in bindings {
            let renamable = self.wires.contains(&net)
                && !renamed.contains_key(&net)
                && !input_bits.contains(&net);
            if renamable {
                renamed.insert(net.clone(), bit.clone());
            } else {
                let src = renamed.get(&net).cloned().unwrap_or(net);
                self.cell_to(lib, "BUF", &[&src], &bit)?;
                origin.push(None);
            }
        }
        if !renamed.is_empty() {
            for g in &mut self.gates {
                for sig in g.pin_map.values_mut() {
                    if let Signal::Net(n) = sig {
                        if let Some(r) = renamed.get(n) {
                            *n = r.clone();
                        }
                    }
                }
            }
            self.wires.retain(|w| !renamed.contains_key(w));
        }
        let wires = self.wires.into_iter().map(Decl::scalar).collect();
        let n = Netlist::from_parts(self.name, self.ports, wires, self.gates, lib)?;
        Ok((n, origin))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_netlist;

    #[test]
    fn builds_and_binds() {
        let lib = CellLibrary::builtin();
        let mut b = NetlistBuilder::new("m");
        let a = b.input("a", 2);
        let y = b.output("y", 2);
        let (_, t) = b.cell(&lib, "AND2", &[&a[0], &a[1]]).unwrap();
        b.bind_output(&y[0], &t);
        b.bind_output(&y[1], &t);
        let (n, origin) = b.finish(&lib).unwrap();
        assert_eq!(n.gates.len(), 2);
        assert_eq!(origin, vec![Some(0), None]);
        assert_eq!(
            n.source_text,
            "module m (a, y);\n  input [1:0] a;\n  output [1:0] y;\n  AND2 g0 (.A(a[0]), .B(a[1]), .Y(y[0]));\n  BUF g1 (.A(y[0]), .Y(y[1]));\nendmodule\n"
        );
        assert!(parse_netlist(&n.source_text, &lib)
            .unwrap()
            .structure_eq(&n));
    }
}
