// SPDX-License-Identifier: Apache-2.0

//! Structural netlist data model.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::error::{NetlistError, Result};
use crate::expr::BoolExpr;
use crate::library::CellLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Input => "input",
            Direction::Output => "output",
        })
    }
}

/// Declared bit range `[msb:lsb]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitRange {
    pub msb: i64,
    pub lsb: i64,
}

impl BitRange {
    pub fn new(msb: i64, lsb: i64) -> Self {
        BitRange { msb, lsb }
    }

    /// `[width-1:0]`.
    pub fn of_width(width: usize) -> Self {
        BitRange::new(width as i64 - 1, 0)
    }

    pub fn width(&self) -> usize {
        (self.msb - self.lsb).unsigned_abs() as usize + 1
    }

    /// Indices from lsb towards msb.
    pub fn indices(&self) -> Vec<i64> {
        if self.msb >= self.lsb {
            (self.lsb..=self.msb).collect()
        } else {
            (self.msb..=self.lsb).rev().collect()
        }
    }

    pub fn contains(&self, idx: i64) -> bool {
        let (lo, hi) = if self.msb >= self.lsb {
            (self.lsb, self.msb)
        } else {
            (self.msb, self.lsb)
        };
        (lo..=hi).contains(&idx)
    }
}

impl fmt::Display for BitRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}:{}]", self.msb, self.lsb)
    }
}

/// A named declaration that may be a vector; vectors are bit-blasted into
/// 1-bit nets named `name[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decl {
    pub name: String,
    pub range: Option<BitRange>,
}

impl Decl {
    pub fn scalar(name: impl Into<String>) -> Self {
        Decl {
            name: name.into(),
            range: None,
        }
    }

    pub fn vector(name: impl Into<String>, width: usize) -> Self {
        Decl {
            name: name.into(),
            range: Some(BitRange::of_width(width)),
        }
    }

    pub fn width(&self) -> usize {
        self.range.map_or(1, |r| r.width())
    }

    /// Bit net names, lsb first.
    pub fn bits(&self) -> Vec<String> {
        match self.range {
            None => vec![self.name.clone()],
            Some(r) => r
                .indices()
                .into_iter()
                .map(|i| bit_name(&self.name, i))
                .collect(),
        }
    }
}

pub fn bit_name(base: &str, idx: i64) -> String {
    format!("{base}[{idx}]")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Port {
    pub decl: Decl,
    pub direction: Direction,
}

impl Port {
    pub fn new(name: impl Into<String>, direction: Direction, width: usize) -> Self {
        let decl = if width == 1 {
            Decl::scalar(name)
        } else {
            Decl::vector(name, width)
        };
        Port { decl, direction }
    }

    pub fn name(&self) -> &str {
        &self.decl.name
    }

    pub fn width(&self) -> usize {
        self.decl.width()
    }

    pub fn bits(&self) -> Vec<String> {
        self.decl.bits()
    }
}

/// What a gate pin is tied to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    Net(String),
    Const(bool),
}

impl Signal {
    pub fn net(&self) -> Option<&str> {
        match self {
            Signal::Net(n) => Some(n),
            Signal::Const(_) => None,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Net(n) => f.write_str(n),
            Signal::Const(b) => write!(f, "1'b{}", u8::from(*b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Gate {
    pub instance_name: String,
    pub cell_type: String,
    pub pin_map: BTreeMap<String, Signal>,
}

impl Gate {
    pub fn new<I, S>(
        instance_name: impl Into<String>,
        cell_type: impl Into<String>,
        pins: I,
    ) -> Self
    where
        I: IntoIterator<Item = (S, Signal)>,
        S: Into<String>,
    {
        Gate {
            instance_name: instance_name.into(),
            cell_type: cell_type.into(),
            pin_map: pins.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// Who drives a net.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Driver {
    /// Input port bit.
    Input,
    /// Output pin of the gate at this index.
    Gate(usize),
}

#[derive(Debug, Clone)]
pub struct Netlist {
    pub name: String,
    pub ports: Vec<Port>,
    pub wires: Vec<Decl>,
    pub gates: Vec<Gate>,
    pub source_text: String,
}

impl Netlist {
    /// Builds a netlist from parts, validates it and renders its source text.
    pub fn from_parts(
        name: impl Into<String>,
        ports: Vec<Port>,
        wires: Vec<Decl>,
        gates: Vec<Gate>,
        lib: &CellLibrary,
    ) -> Result<Self> {
        let mut n = Netlist {
            name: name.into(),
            ports,
            wires,
            gates,
            source_text: String::new(),
        };
        n.validate(lib)?;
        n.source_text = crate::emit::emit_verilog(&n);
        Ok(n)
    }

    /// Equality on everything except the source text.
    pub fn structure_eq(&self, other: &Netlist) -> bool {
        self.name == other.name
            && self.ports == other.ports
            && self.wires == other.wires
            && self.gates == other.gates
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Port> {
        self.ports
            .iter()
            .filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Port> {
        self.ports
            .iter()
            .filter(|p| p.direction == Direction::Output)
    }

    pub fn input_bits(&self) -> Vec<String> {
        self.inputs().flat_map(Port::bits).collect()
    }

    pub fn output_bits(&self) -> Vec<String> {
        self.outputs().flat_map(Port::bits).collect()
    }

    /// All declared 1-bit nets: port bits then wire bits, in declaration order.
    pub fn nets(&self) -> Vec<String> {
        self.ports
            .iter()
            .map(|p| &p.decl)
            .chain(self.wires.iter())
            .flat_map(Decl::bits)
            .collect()
    }

    pub fn gate_index(&self, instance: &str) -> Option<usize> {
        self.gates.iter().position(|g| g.instance_name == instance)
    }

    /// Net → driver map. Assumes a validated netlist.
    pub fn drivers(&self, lib: &CellLibrary) -> HashMap<String, Driver> {
        let mut map = HashMap::new();
        for bit in self.input_bits() {
            map.insert(bit, Driver::Input);
        }
        for (i, g) in self.gates.iter().enumerate() {
            if let Some(cell) = lib.get(&g.cell_type) {
                if let Some(Signal::Net(n)) = g.pin_map.get(&cell.output) {
                    map.insert(n.clone(), Driver::Gate(i));
                }
            }
        }
        map
    }

    /// Checks every structural invariant against `lib`.
    pub fn validate(&self, lib: &CellLibrary) -> Result<()> {
        let mut declared: HashSet<String> = HashSet::new();
        let mut names: HashSet<&str> = HashSet::new();
        for d in self.ports.iter().map(|p| &p.decl).chain(self.wires.iter()) {
            if !names.insert(d.name.as_str()) {
                return Err(NetlistError::DuplicateDeclaration(d.name.clone()));
            }
            declared.extend(d.bits());
        }
        // `a` and `a[0]` may both exist only if they come from different declarations.
        let mut driven: HashSet<String> = self.input_bits().into_iter().collect();
        let mut instances: HashSet<&str> = HashSet::new();
        for g in &self.gates {
            if !instances.insert(g.instance_name.as_str()) {
                return Err(NetlistError::DuplicateDeclaration(g.instance_name.clone()));
            }
            let cell = lib.cell(&g.cell_type)?;
            for formal in cell.ports() {
                if !g.pin_map.contains_key(formal) {
                    return Err(NetlistError::PinMismatch {
                        instance: g.instance_name.clone(),
                        detail: format!("pin {formal} of {} is unconnected", cell.name),
                    });
                }
            }
            for (pin, sig) in &g.pin_map {
                if cell.ports().all(|p| p != pin) {
                    return Err(NetlistError::PinMismatch {
                        instance: g.instance_name.clone(),
                        detail: format!("{} has no pin {pin}", cell.name),
                    });
                }
                if let Signal::Net(n) = sig {
                    if !declared.contains(n) {
                        return Err(NetlistError::UndeclaredNet(n.clone()));
                    }
                }
            }
            match &g.pin_map[&cell.output] {
                Signal::Net(n) => {
                    if !driven.insert(n.clone()) {
                        return Err(NetlistError::MultipleDrivers(n.clone()));
                    }
                }
                Signal::Const(_) => {
                    return Err(NetlistError::PinMismatch {
                        instance: g.instance_name.clone(),
                        detail: "output pin tied to a constant".to_string(),
                    })
                }
            }
        }
        Ok(())
    }
}

/// Symbolic expression of a combinational gate over its actual input nets.
pub fn derive_gate_expr(gate: &Gate, lib: &CellLibrary) -> Result<BoolExpr> {
    let cell = lib.cell(&gate.cell_type)?;
    if cell.is_sequential() {
        return Err(NetlistError::SequentialCell(cell.name.clone()));
    }
    if let Some(p) = cell.inputs.iter().find(|f| !gate.pin_map.contains_key(*f)) {
        return Err(NetlistError::PinMismatch {
            instance: gate.instance_name.clone(),
            detail: format!("pin {p} unconnected"),
        });
    }
    let e = cell.expr.substitute(&|formal| match &gate.pin_map[formal] {
        Signal::Net(n) => BoolExpr::Var(n.clone()),
        Signal::Const(b) => BoolExpr::Const(*b),
    });
    Ok(e)
}

/// Interface-only listing, e.g. `inputs: a, b; outputs: y`.
///
/// Vector ports carry their range (`a[3:0]`); order is declaration order.
pub fn extract_io_signals(n: &Netlist) -> String {
    let fmt_port = |p: &Port| match p.decl.range {
        None => p.name().to_string(),
        Some(r) => format!("{}{}", p.name(), r),
    };
    let ins: Vec<String> = n.inputs().map(fmt_port).collect();
    let outs: Vec<String> = n.outputs().map(fmt_port).collect();
    format!("inputs: {}; outputs: {}", ins.join(", "), outs.join(", "))
}
