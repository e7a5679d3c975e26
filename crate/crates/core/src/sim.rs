// SPDX-License-Identifier: Apache-2.0

//! Zero-delay evaluation of netlists.

use std::collections::{BTreeMap, HashMap};

use crate::error::{NetlistError, Result};
use crate::library::CellLibrary;
use crate::netlist::{derive_gate_expr, Driver, Netlist, Signal};

/// Evaluates every net for one input assignment.
///
/// `values` holds input port bits and, for sequential designs, the current
/// state of register outputs; missing bits read as 0.
pub fn simulate(
    n: &Netlist,
    lib: &CellLibrary,
    values: &HashMap<String, bool>,
) -> Result<HashMap<String, bool>> {
    let drivers = n.drivers(lib);
    let mut out: HashMap<String, bool> = HashMap::new();
    for bit in n.input_bits() {
        out.insert(bit.clone(), values.get(&bit).copied().unwrap_or(false));
    }
    let mut on_stack: Vec<String> = Vec::new();
    for net in n.nets() {
        eval_net(n, lib, &drivers, values, &net, &mut out, &mut on_stack)?;
    }
    Ok(out)
}

fn eval_net(
    n: &Netlist,
    lib: &CellLibrary,
    drivers: &HashMap<String, Driver>,
    state: &HashMap<String, bool>,
    net: &str,
    out: &mut HashMap<String, bool>,
    on_stack: &mut Vec<String>,
) -> Result<bool> {
    if let Some(&v) = out.get(net) {
        return Ok(v);
    }
    let gi = match drivers.get(net) {
        Some(Driver::Gate(i)) => *i,
        _ => {
            out.insert(net.to_string(), false);
            return Ok(false);
        }
    };
    let gate = &n.gates[gi];
    if lib.cell(&gate.cell_type)?.is_sequential() {
        let v = state.get(net).copied().unwrap_or(false);
        out.insert(net.to_string(), v);
        return Ok(v);
    }
    if on_stack.iter().any(|s| s == net) {
        let mut cycle = on_stack.clone();
        cycle.push(net.to_string());
        return Err(NetlistError::CombinationalLoop(cycle));
    }
    on_stack.push(net.to_string());
    let mut inputs: HashMap<String, bool> = HashMap::new();
    for sig in gate.pin_map.values() {
        if let Signal::Net(m) = sig {
            if m != net {
                let v = eval_net(n, lib, drivers, state, m, out, on_stack)?;
                inputs.insert(m.clone(), v);
            }
        }
    }
    on_stack.pop();
    let v = derive_gate_expr(gate, lib)?.eval(&|name| inputs.get(name).copied())?;
    out.insert(net.to_string(), v);
    Ok(v)
}

/// Word-level wrapper: port name to unsigned value, lsb at bit index 0.
pub fn simulate_words(
    n: &Netlist,
    lib: &CellLibrary,
    inputs: &BTreeMap<String, u64>,
) -> Result<BTreeMap<String, u64>> {
    let mut values = HashMap::new();
    for p in n.inputs() {
        let word = inputs.get(p.name()).copied().unwrap_or(0);
        for (i, bit) in p.bits().into_iter().enumerate() {
            values.insert(bit, (word >> i) & 1 == 1);
        }
    }
    let nets = simulate(n, lib, &values)?;
    Ok(n.outputs()
        .map(|p| {
            let word = p
                .bits()
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, b)| acc | (u64::from(nets[b]) << i));
            (p.name().to_string(), word)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_netlist;

    #[test]
    fn half_adder_words() {
        let lib = CellLibrary::builtin();
        let src = "module h(a, b, s, c); input a, b; output s, c; XOR2 g0(.A(a), .B(b), .Y(s)); AND2 g1(.A(a), .B(b), .Y(c)); endmodule";
        let n = parse_netlist(src, &lib).unwrap();
        for a in 0..2u64 {
            for b in 0..2u64 {
                let ins = BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]);
                let o = simulate_words(&n, &lib, &ins).unwrap();
                assert_eq!(o["s"] + 2 * o["c"], a + b);
            }
        }
    }
}
