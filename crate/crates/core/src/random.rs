// SPDX-License-Identifier: Apache-2.0

//! Random netlists drawn from a cell library, for fuzzing and property tests.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::builder::NetlistBuilder;
use crate::library::CellLibrary;
use crate::netlist::{Netlist, Signal};

#[derive(Debug, Clone)]
pub struct RandomNetlistConfig {
    pub max_input_ports: usize,
    pub max_output_ports: usize,
    pub max_width: usize,
    pub max_gates: usize,
    pub max_registers: usize,
    /// Probability that a gate input pin is tied to a constant.
    pub constant_prob: f64,
}

impl Default for RandomNetlistConfig {
    fn default() -> Self {
        RandomNetlistConfig {
            max_input_ports: 3,
            max_output_ports: 2,
            max_width: 3,
            max_gates: 24,
            max_registers: 2,
            constant_prob: 0.03,
        }
    }
}

/// Draws a valid netlist. Registers may close feedback loops; combinational
/// logic is always acyclic.
pub fn random_netlist<R: Rng>(
    rng: &mut R,
    lib: &CellLibrary,
    cfg: &RandomNetlistConfig,
    name: &str,
) -> Netlist {
    let comb: Vec<&str> = lib
        .cells()
        .filter(|c| !c.is_sequential())
        .map(|c| c.name.as_str())
        .collect();
    let seq: Vec<&str> = lib
        .cells()
        .filter(|c| c.is_sequential())
        .map(|c| c.name.as_str())
        .collect();
    let mut b = NetlistBuilder::new(name);
    let mut pool: Vec<String> = Vec::new();
    for i in 0..rng.gen_range(1..=cfg.max_input_ports.max(1)) {
        pool.extend(b.input(&format!("in{i}"), rng.gen_range(1..=cfg.max_width.max(1))));
    }
    let clock = pool[0].clone();

    // Register outputs join the pool before any logic so logic can read them.
    let n_regs = if seq.is_empty() {
        0
    } else {
        rng.gen_range(0..=cfg.max_registers)
    };
    let mut reg_q = Vec::new();
    for _ in 0..n_regs {
        let q = b.fresh_wire();
        pool.push(q.clone());
        reg_q.push(q);
    }

    for _ in 0..rng.gen_range(0..=cfg.max_gates) {
        let cell = lib
            .cell(comb.choose(rng).expect("library has combinational cells"))
            .unwrap();
        let inputs: Vec<Signal> = (0..cell.inputs.len())
            .map(|_| {
                if rng.gen_bool(cfg.constant_prob) {
                    Signal::Const(rng.gen())
                } else {
                    Signal::Net(pool.choose(rng).unwrap().clone())
                }
            })
            .collect();
        let out = b.fresh_wire();
        b.cell_sig(lib, &cell.name, &inputs, &out).unwrap();
        pool.push(out);
    }

    for q in &reg_q {
        let cell = lib.cell(seq.choose(rng).unwrap()).unwrap();
        let spec = cell.sequential.as_ref().unwrap();
        let inputs: Vec<Signal> = cell
            .inputs
            .iter()
            .map(|p| {
                if *p == spec.clock {
                    Signal::Net(clock.clone())
                } else {
                    Signal::Net(pool.choose(rng).unwrap().clone())
                }
            })
            .collect();
        b.cell_sig(lib, &cell.name, &inputs, q).unwrap();
    }

    for i in 0..rng.gen_range(1..=cfg.max_output_ports.max(1)) {
        let bits = b.output(&format!("out{i}"), rng.gen_range(1..=cfg.max_width.max(1)));
        for bit in bits {
            let src = pool.choose(rng).unwrap().clone();
            b.bind_output(&bit, &src);
        }
    }
    b.finish(lib).expect("random construction is valid").0
}
