// SPDX-License-Identifier: Apache-2.0

//! Synthetic arithmetic corpus.
//!
//! A design is a chain of one to three word-level blocks (adder, subtractor,
//! multiplier, comparator, multiplexer) over `w`-bit inputs. Each block is
//! lowered structurally into library cells and every gate is tagged with the
//! function of the block that produced it. Alongside the netlist the
//! generator emits reference RTL, a self-checking testbench and reference
//! descriptions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use netreason_core::{CellLibrary, Netlist, NetlistBuilder};
use netreason_model::pred::FunctionLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rtl::{FAIL_SENTINEL, PASS_SENTINEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Gt,
    Lt,
    Eq,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Add,
    Sub,
    Mul,
    Cmp(CmpOp),
    /// `args[0] ? args[2] : args[1]`
    Mux,
}

impl BlockKind {
    pub fn label(self) -> FunctionLabel {
        match self {
            BlockKind::Add => FunctionLabel::Adder,
            BlockKind::Sub => FunctionLabel::Subtractor,
            BlockKind::Mul => FunctionLabel::Multiplier,
            BlockKind::Cmp(_) => FunctionLabel::Comparator,
            BlockKind::Mux => FunctionLabel::Control,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            BlockKind::Add => "add",
            BlockKind::Sub => "sub",
            BlockKind::Mul => "mul",
            BlockKind::Cmp(_) => "cmp",
            BlockKind::Mux => "mux",
        }
    }

    fn noun(self) -> &'static str {
        match self {
            BlockKind::Add => "adder",
            BlockKind::Sub => "subtractor",
            BlockKind::Mul => "multiplier",
            BlockKind::Cmp(_) => "comparator",
            BlockKind::Mux => "multiplexer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Input(usize),
    /// Result of an earlier block, low `w` bits when wider.
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub args: Vec<Operand>,
    /// Cell-mapping variant.
    pub style: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub name: String,
    pub width: u32,
    pub inputs: Vec<(String, u32)>,
    pub blocks: Vec<Block>,
}

impl DesignSpec {
    /// Full result width of block `k`.
    pub fn block_width(&self, k: usize) -> u32 {
        let w = self.width;
        match self.blocks[k].kind {
            BlockKind::Add => w + 1,
            BlockKind::Sub | BlockKind::Mux => w,
            BlockKind::Mul => 2 * w,
            BlockKind::Cmp(_) => 1,
        }
    }

    fn consumed(&self, k: usize) -> bool {
        self.blocks
            .iter()
            .any(|b| b.args.contains(&Operand::Node(k)))
    }

    /// Blocks whose results drive outputs, with output names.
    pub fn outputs(&self) -> Vec<(String, usize)> {
        (0..self.blocks.len())
            .filter(|&k| !self.consumed(k))
            .enumerate()
            .map(|(i, k)| (format!("y{i}"), k))
            .collect()
    }

    /// Word-level reference semantics.
    pub fn eval(&self, inputs: &[u64]) -> BTreeMap<String, u64> {
        let w = self.width;
        let m = |bits: u32| {
            if bits >= 64 {
                u64::MAX
            } else {
                (1u64 << bits) - 1
            }
        };
        let mut vals: Vec<u64> = Vec::new();
        for (k, b) in self.blocks.iter().enumerate() {
            let arg = |o: &Operand| match *o {
                Operand::Input(i) => inputs[i] & m(self.inputs[i].1),
                Operand::Node(j) => vals[j] & m(w.min(self.block_width(j))),
            };
            let a: Vec<u64> = b.args.iter().map(arg).collect();
            let v = match b.kind {
                BlockKind::Add => a[0] + a[1],
                BlockKind::Sub => a[0].wrapping_sub(a[1]),
                BlockKind::Mul => a[0] * a[1],
                BlockKind::Cmp(CmpOp::Gt) => u64::from(a[0] > a[1]),
                BlockKind::Cmp(CmpOp::Lt) => u64::from(a[0] < a[1]),
                BlockKind::Cmp(CmpOp::Eq) => u64::from(a[0] == a[1]),
                BlockKind::Mux => {
                    if a[0] & 1 == 1 {
                        a[2]
                    } else {
                        a[1]
                    }
                }
            };
            vals.push(v & m(self.block_width(k)));
        }
        self.outputs()
            .into_iter()
            .map(|(n, k)| (n, vals[k]))
            .collect()
    }

    pub fn labels(&self) -> Vec<FunctionLabel> {
        let mut v: Vec<FunctionLabel> = self.blocks.iter().map(|b| b.kind.label()).collect();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub designs: usize,
    pub min_width: u32,
    pub max_width: u32,
    pub max_blocks: usize,
    /// Input-bit budget for exhaustive testbenches.
    pub exhaustive_bits: u32,
    pub random_vectors: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 0,
            designs: 200,
            min_width: 2,
            max_width: 6,
            max_blocks: 3,
            exhaustive_bits: 8,
            random_vectors: 64,
        }
    }
}

const DATA_NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn random_kind<R: Rng>(rng: &mut R) -> BlockKind {
    match rng.gen_range(0..7) {
        0 => BlockKind::Add,
        1 => BlockKind::Sub,
        2 => BlockKind::Mul,
        3 => BlockKind::Cmp(CmpOp::Gt),
        4 => BlockKind::Cmp(CmpOp::Lt),
        5 => BlockKind::Cmp(CmpOp::Eq),
        _ => BlockKind::Mux,
    }
}

/// Draws one design specification.
pub fn random_spec<R: Rng>(rng: &mut R, cfg: &CorpusConfig, index: usize) -> DesignSpec {
    let w = rng.gen_range(cfg.min_width.max(2)..=cfg.max_width.max(cfg.min_width.max(2)));
    let n_blocks = match rng.gen_range(0..20) {
        0..=7 => 1,
        8..=14 => 2,
        _ => 3,
    }
    .min(cfg.max_blocks.max(1));
    let mut inputs: Vec<(String, u32)> = Vec::new();
    let fresh_data = |inputs: &mut Vec<(String, u32)>| {
        let n = inputs.iter().filter(|(_, bits)| *bits == w).count();
        inputs.push((DATA_NAMES[n].to_string(), w));
        Operand::Input(inputs.len() - 1)
    };
    let mut blocks: Vec<Block> = Vec::new();
    for k in 0..n_blocks {
        let mut kind = random_kind(rng);
        // a comparator result can only feed a multiplexer select
        let prev_cmp = k > 0 && matches!(blocks[k - 1].kind, BlockKind::Cmp(_));
        if prev_cmp {
            kind = BlockKind::Mux;
        }
        let style = rng.gen_range(0..2);
        let args = if k == 0 {
            let a = fresh_data(&mut inputs);
            let b = fresh_data(&mut inputs);
            if kind == BlockKind::Mux {
                inputs.push(("sel".to_string(), 1));
                vec![Operand::Input(inputs.len() - 1), a, b]
            } else {
                vec![a, b]
            }
        } else if kind == BlockKind::Mux {
            let prev = Operand::Node(k - 1);
            if prev_cmp {
                let x = fresh_data(&mut inputs);
                let y = match blocks[k - 1].args[0] {
                    Operand::Input(i) if inputs[i].1 == w => Operand::Input(i),
                    _ => fresh_data(&mut inputs),
                };
                vec![prev, x, y]
            } else {
                inputs.push((format!("sel{k}"), 1));
                let s = Operand::Input(inputs.len() - 1);
                let other = fresh_data(&mut inputs);
                if rng.gen_bool(0.5) {
                    vec![s, prev, other]
                } else {
                    vec![s, other, prev]
                }
            }
        } else {
            let prev = Operand::Node(k - 1);
            let other = fresh_data(&mut inputs);
            if rng.gen_bool(0.5) {
                vec![prev, other]
            } else {
                vec![other, prev]
            }
        };
        blocks.push(Block { kind, args, style });
    }
    let tag: Vec<&str> = blocks.iter().map(|b| b.kind.short()).collect();
    DesignSpec {
        name: format!("{}_{}b_{index:04}", tag.join("_"), w),
        width: w,
        inputs,
        blocks,
    }
}

/// Cell emitter that tags every created gate with the current block.
struct Lowering<'a> {
    b: NetlistBuilder,
    lib: &'a CellLibrary,
    labels: Vec<FunctionLabel>,
    current: FunctionLabel,
}

impl Lowering<'_> {
    fn cell(&mut self, cell: &str, ins: &[&str]) -> Result<String> {
        let (_, out) = self.b.cell(self.lib, cell, ins)?;
        self.labels.push(self.current);
        Ok(out)
    }

    /// Sum of two or three bits, and the carry when `need_carry`.
    fn add_bits(
        &mut self,
        bits: &[&str],
        style: u8,
        need_carry: bool,
    ) -> Result<(String, Option<String>)> {
        match (bits, style) {
            ([x, y], _) => {
                let s = self.cell("XOR2", &[x, y])?;
                let c = if need_carry {
                    Some(self.cell("AND2", &[x, y])?)
                } else {
                    None
                };
                Ok((s, c))
            }
            ([x, y, c], 0 | 1) => {
                let p = self.cell("XOR2", &[x, y])?;
                let s = self.cell("XOR2", &[&p, c])?;
                if !need_carry {
                    return Ok((s, None));
                }
                let g = self.cell("AND2", &[x, y])?;
                let carry = if style == 0 {
                    let t = self.cell("AND2", &[&p, c])?;
                    self.cell("OR2", &[&g, &t])?
                } else {
                    let n = self.cell("AOI21", &[&p, c, &g])?;
                    self.cell("INV", &[&n])?
                };
                Ok((s, Some(carry)))
            }
            // multiplier compressor cells
            ([x, y, c], _) => {
                let s = self.cell("XOR3", &[x, y, c])?;
                if !need_carry {
                    return Ok((s, None));
                }
                let n1 = self.cell("NAND2", &[x, y])?;
                let o = self.cell("OR2", &[x, y])?;
                let n2 = self.cell("NAND2", &[c, &o])?;
                Ok((s, Some(self.cell("NAND2", &[&n1, &n2])?)))
            }
            _ => unreachable!("add_bits takes two or three bits"),
        }
    }

    fn adder(
        &mut self,
        x: &[String],
        y: &[String],
        style: u8,
        out_w: usize,
    ) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let mut carry: Option<String> = None;
        for i in 0..x.len().min(out_w) {
            let need = i + 1 < out_w;
            let (s, c) = match carry.take() {
                None => self.add_bits(&[&x[i], &y[i]], style, need)?,
                Some(c) => self.add_bits(&[&x[i], &y[i], &c], style, need)?,
            };
            out.push(s);
            carry = c;
        }
        out.extend(carry);
        Ok(out)
    }

    fn subtractor(&mut self, x: &[String], y: &[String]) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let mut borrow: Option<String> = None;
        for i in 0..x.len() {
            let last = i + 1 == x.len();
            match borrow.take() {
                None => {
                    out.push(self.cell("XOR2", &[&x[i], &y[i]])?);
                    if !last {
                        let na = self.cell("INV", &[&x[i]])?;
                        borrow = Some(self.cell("AND2", &[&na, &y[i]])?);
                    }
                }
                Some(bi) => {
                    let e = self.cell("XNOR2", &[&x[i], &y[i]])?;
                    out.push(self.cell("XNOR2", &[&e, &bi])?);
                    if !last {
                        let na = self.cell("INV", &[&x[i]])?;
                        let t1 = self.cell("AND2", &[&na, &y[i]])?;
                        let t2 = self.cell("AND2", &[&e, &bi])?;
                        borrow = Some(self.cell("OR2", &[&t1, &t2])?);
                    }
                }
            }
        }
        Ok(out)
    }

    fn multiplier(&mut self, x: &[String], y: &[String], out_w: usize) -> Result<Vec<String>> {
        let w = x.len();
        let mut acc: Vec<Option<String>> = vec![None; 2 * w];
        for (i, yi) in y.iter().enumerate() {
            if i >= out_w {
                break;
            }
            let mut carry: Option<String> = None;
            for (j, xj) in x.iter().enumerate() {
                let pos = i + j;
                if pos >= out_w {
                    break;
                }
                let pp = self.cell("AND2", &[xj, yi])?;
                let mut bits: Vec<String> = vec![pp];
                bits.extend(acc[pos].take());
                bits.extend(carry.take());
                let refs: Vec<&str> = bits.iter().map(String::as_str).collect();
                acc[pos] = Some(match refs.len() {
                    1 => bits[0].clone(),
                    _ => {
                        let (s, c) = self.add_bits(&refs, 2, pos + 1 < out_w)?;
                        carry = c;
                        s
                    }
                });
            }
            if i + w < out_w {
                acc[i + w] = carry;
            }
        }
        Ok(acc
            .into_iter()
            .take(out_w)
            .map(|b| b.expect("every product bit is driven"))
            .collect())
    }

    fn comparator(&mut self, x: &[String], y: &[String], op: CmpOp) -> Result<String> {
        let eqs: Vec<String> = x
            .iter()
            .zip(y)
            .map(|(a, b)| self.cell("XNOR2", &[a, b]))
            .collect::<Result<_>>()?;
        if op == CmpOp::Eq {
            let mut level = eqs;
            while level.len() > 1 {
                let mut next = Vec::new();
                for chunk in level.chunks(4) {
                    let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
                    next.push(match refs.len() {
                        1 => chunk[0].clone(),
                        2 => self.cell("AND2", &refs)?,
                        3 => self.cell("AND3", &refs)?,
                        _ => self.cell("AND4", &refs)?,
                    });
                }
                level = next;
            }
            return Ok(level.remove(0));
        }
        let (p, q) = if op == CmpOp::Gt { (x, y) } else { (y, x) };
        let mut acc: Option<String> = None;
        for i in 0..p.len() {
            let np = self.cell("INV", &[&p[i]])?;
            let g = self.cell("NOR2", &[&np, &q[i]])?;
            acc = Some(match acc {
                None => g,
                Some(prev) => {
                    let n = self.cell("AOI21", &[&eqs[i], &prev, &g])?;
                    self.cell("INV", &[&n])?
                }
            });
        }
        Ok(acc.expect("width at least one"))
    }

    fn mux(&mut self, s: &str, x: &[String], y: &[String], style: u8) -> Result<Vec<String>> {
        if style == 0 {
            return x
                .iter()
                .zip(y)
                .map(|(a, b)| self.cell("MUX2", &[a, b, s]))
                .collect();
        }
        let ns = self.cell("INV", &[s])?;
        let mut out = Vec::new();
        for (a, b) in x.iter().zip(y) {
            let l = self.cell("NAND2", &[a, &ns])?;
            let r = self.cell("NAND2", &[b, s])?;
            out.push(self.cell("NAND2", &[&l, &r])?);
        }
        Ok(out)
    }
}

/// Lowers a specification into gates. Returns the netlist and one label per
/// gate.
pub fn lower(spec: &DesignSpec, lib: &CellLibrary) -> Result<(Netlist, Vec<FunctionLabel>)> {
    let w = spec.width as usize;
    let mut lw = Lowering {
        b: NetlistBuilder::new(spec.name.clone()),
        lib,
        labels: Vec::new(),
        current: FunctionLabel::Adder,
    };
    let input_bits: Vec<Vec<String>> = spec
        .inputs
        .iter()
        .map(|(n, bits)| lw.b.input(n, *bits as usize))
        .collect();
    let outputs = spec.outputs();
    let out_bits: Vec<Vec<String>> = outputs
        .iter()
        .map(|(n, k)| lw.b.output(n, spec.block_width(*k) as usize))
        .collect();
    let mut results: Vec<Vec<String>> = Vec::new();
    for (k, blk) in spec.blocks.iter().enumerate() {
        lw.current = blk.kind.label();
        let needed = if spec.consumed(k) {
            (spec.block_width(k) as usize).min(w)
        } else {
            spec.block_width(k) as usize
        };
        let args: Vec<Vec<String>> = blk
            .args
            .iter()
            .map(|o| match *o {
                Operand::Input(i) => input_bits[i].clone(),
                Operand::Node(j) => results[j].iter().take(w).cloned().collect(),
            })
            .collect();
        let r = match blk.kind {
            BlockKind::Add => lw.adder(&args[0], &args[1], blk.style, needed)?,
            BlockKind::Sub => lw.subtractor(&args[0], &args[1])?,
            BlockKind::Mul => lw.multiplier(&args[0], &args[1], needed)?,
            BlockKind::Cmp(op) => vec![lw.comparator(&args[0], &args[1], op)?],
            BlockKind::Mux => lw.mux(&args[0][0], &args[1], &args[2], blk.style)?,
        };
        results.push(r);
    }
    let mut bound_labels = Vec::new();
    for ((_, k), bits) in outputs.iter().zip(&out_bits) {
        for (bit, net) in bits.iter().zip(&results[*k]) {
            lw.b.bind_output(bit, net);
            bound_labels.push(spec.blocks[*k].kind.label());
        }
    }
    let Lowering { b, labels, .. } = lw;
    let (netlist, origin) = b.finish(lib)?;
    let fallback = spec.blocks.last().expect("at least one block").kind.label();
    let labels = origin
        .iter()
        .map(|o| o.map_or(fallback, |i| labels[i]))
        .collect();
    Ok((netlist, labels))
}

fn port_decl(dir: &str, name: &str, bits: u32) -> String {
    if bits == 1 {
        format!("  {dir} {name};\n")
    } else {
        format!("  {dir} [{}:0] {name};\n", bits - 1)
    }
}

fn operand_text(spec: &DesignSpec, o: Operand) -> String {
    match o {
        Operand::Input(i) => spec.inputs[i].0.clone(),
        Operand::Node(j) if spec.block_width(j) > spec.width => {
            format!("t{j}[{}:0]", spec.width - 1)
        }
        Operand::Node(j) => format!("t{j}"),
    }
}

fn block_expr(spec: &DesignSpec, blk: &Block) -> String {
    let a: Vec<String> = blk.args.iter().map(|o| operand_text(spec, *o)).collect();
    match blk.kind {
        BlockKind::Add => format!("{} + {}", a[0], a[1]),
        BlockKind::Sub => format!("{} - {}", a[0], a[1]),
        BlockKind::Mul => format!("{} * {}", a[0], a[1]),
        BlockKind::Cmp(op) => format!("{} {} {}", a[0], op.symbol(), a[1]),
        BlockKind::Mux => format!("{} ? {} : {}", a[0], a[2], a[1]),
    }
}

/// Reference word-level RTL.
pub fn golden_rtl(spec: &DesignSpec) -> String {
    let outputs = spec.outputs();
    let names: Vec<&str> = spec
        .inputs
        .iter()
        .map(|(n, _)| n.as_str())
        .chain(outputs.iter().map(|(n, _)| n.as_str()))
        .collect();
    let mut s = format!("module {}({});\n", spec.name, names.join(", "));
    for (n, bits) in &spec.inputs {
        s += &port_decl("input", n, *bits);
    }
    for (n, k) in &outputs {
        s += &port_decl("output", n, spec.block_width(*k));
    }
    for k in 0..spec.blocks.len() {
        s += &port_decl("wire", &format!("t{k}"), spec.block_width(k));
    }
    s.push('\n');
    for (k, blk) in spec.blocks.iter().enumerate() {
        let _ = writeln!(s, "  assign t{k} = {};", block_expr(spec, blk));
    }
    for (n, k) in &outputs {
        let _ = writeln!(s, "  assign {n} = t{k};");
    }
    s + "endmodule\n"
}

fn test_vectors(spec: &DesignSpec, cfg: &CorpusConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
    let bits: u32 = spec.inputs.iter().map(|(_, b)| b).sum();
    let split = |mut v: u64| -> Vec<u64> {
        spec.inputs
            .iter()
            .map(|(_, b)| {
                let x = v & ((1 << b) - 1);
                v >>= b;
                x
            })
            .collect()
    };
    if bits <= cfg.exhaustive_bits {
        return (0..1u64 << bits).map(split).collect();
    }
    let mut v = vec![split(0), split((1u64 << bits) - 1)];
    v.extend((0..cfg.random_vectors).map(|_| split(rng.gen_range(0..1u64 << bits))));
    v
}

fn literal(bits: u32, v: u64) -> String {
    format!("{bits}'d{v}")
}

/// Self-checking testbench instantiating `spec.name` as `dut`.
pub fn testbench(spec: &DesignSpec, vectors: &[Vec<u64>]) -> String {
    let outputs = spec.outputs();
    let mut s = String::from("`timescale 1ns/1ps\nmodule tb;\n");
    for (n, b) in &spec.inputs {
        s += &port_decl("reg", n, *b);
    }
    for (n, k) in &outputs {
        s += &port_decl("wire", n, spec.block_width(*k));
    }
    s += "  integer errors;\n\n";
    let conns: Vec<String> = spec
        .inputs
        .iter()
        .map(|(n, _)| n)
        .chain(outputs.iter().map(|(n, _)| n))
        .map(|n| format!(".{n}({n})"))
        .collect();
    let _ = writeln!(s, "  {} dut({});\n", spec.name, conns.join(", "));
    s += "  initial begin\n    errors = 0;\n";
    let fmt_in: Vec<String> = spec
        .inputs
        .iter()
        .map(|(n, _)| format!("{n}=%0d"))
        .collect();
    let in_args: Vec<&str> = spec.inputs.iter().map(|(n, _)| n.as_str()).collect();
    for vec in vectors {
        let assigns: Vec<String> = spec
            .inputs
            .iter()
            .zip(vec)
            .map(|((n, b), v)| format!("{n} = {};", literal(*b, *v)))
            .collect();
        let _ = writeln!(s, "    {} #1;", assigns.join(" "));
        let expect = spec.eval(vec);
        for (n, k) in &outputs {
            let bits = spec.block_width(*k);
            let _ = writeln!(
                s,
                "    if ({n} !== {}) begin errors = errors + 1; $display(\"{FAIL_SENTINEL}: {} {n}=%0d expected {}\", {}, {n}); end",
                literal(bits, expect[n]),
                fmt_in.join(" "),
                expect[n],
                in_args.join(", ")
            );
        }
    }
    let _ = write!(
        s,
        "    if (errors == 0) $display(\"{PASS_SENTINEL}\");\n    else $display(\"{FAIL_SENTINEL}: %0d mismatches\", errors);\n    $finish;\n  end\nendmodule\n"
    );
    s
}

fn describe_operand(spec: &DesignSpec, o: Operand) -> String {
    match o {
        Operand::Input(i) => format!("input {}", spec.inputs[i].0),
        Operand::Node(j) if spec.block_width(j) > spec.width => {
            format!(
                "the low {} bits of the {} result",
                spec.width,
                spec.blocks[j].kind.noun()
            )
        }
        Operand::Node(j) => format!("the {} result", spec.blocks[j].kind.noun()),
    }
}

fn port_list(spec: &DesignSpec) -> (String, String) {
    let range = |n: &str, b: u32| {
        if b == 1 {
            n.to_string()
        } else {
            format!("{n}[{}:0]", b - 1)
        }
    };
    let ins: Vec<String> = spec.inputs.iter().map(|(n, b)| range(n, *b)).collect();
    let outs: Vec<String> = spec
        .outputs()
        .iter()
        .map(|(n, k)| range(n, spec.block_width(*k)))
        .collect();
    (ins.join(", "), outs.join(", "))
}

/// Reference functional description.
pub fn describe_function(spec: &DesignSpec) -> String {
    let (ins, outs) = port_list(spec);
    let nouns: Vec<String> = spec
        .blocks
        .iter()
        .map(|b| format!("{}-bit {}", spec.width, b.kind.noun()))
        .collect();
    let purpose = if nouns.len() == 1 {
        format!("The design is a {}.", nouns[0])
    } else {
        format!(
            "The design chains {} blocks: {}.",
            nouns.len(),
            nouns.join(", then ")
        )
    };
    let mut func = String::new();
    for blk in &spec.blocks {
        let a: Vec<String> = blk
            .args
            .iter()
            .map(|o| describe_operand(spec, *o))
            .collect();
        let sentence = match blk.kind {
            BlockKind::Add => format!(
                "The adder computes the unsigned sum of {} and {} including the carry out.",
                a[0], a[1]
            ),
            BlockKind::Sub => format!(
                "The subtractor computes {} minus {} modulo 2^{}.",
                a[0], a[1], spec.width
            ),
            BlockKind::Mul => format!(
                "The multiplier computes the unsigned product of {} and {}.",
                a[0], a[1]
            ),
            BlockKind::Cmp(op) => {
                let rel = match op {
                    CmpOp::Gt => "greater than",
                    CmpOp::Lt => "less than",
                    CmpOp::Eq => "equal to",
                };
                format!("The comparator outputs 1 when {} is {rel} {}.", a[0], a[1])
            }
            BlockKind::Mux => format!(
                "The multiplexer forwards {} when {} is 1 and {} otherwise.",
                a[2], a[0], a[1]
            ),
        };
        func.push_str(&sentence);
        func.push(' ');
    }
    let results: Vec<String> = spec
        .outputs()
        .iter()
        .map(|(n, k)| format!("{n} = {}", block_expr(spec, &spec.blocks[*k])))
        .collect();
    format!(
        "Interface: inputs {ins}; outputs {outs}.\n\
Purpose: {purpose}\n\
Functionality: {}Result: {}.\n\
Constraints: purely combinational with no clock or reset; all values are unsigned.\n",
        func,
        results.join("; ")
    )
}

/// Reference implementation-level description.
pub fn describe_implementation(spec: &DesignSpec) -> String {
    let mut logic = Vec::new();
    for blk in &spec.blocks {
        logic.push(match (blk.kind, blk.style) {
            (BlockKind::Add, 0) => "a ripple-carry adder whose full adders use XOR2 cells for the sum and AND2/OR2 cells for the carry".to_string(),
            (BlockKind::Add, _) => "a ripple-carry adder whose full adders use XOR2 cells for the sum and an AOI21 cell followed by an inverter for the carry".to_string(),
            (BlockKind::Sub, _) => "a ripple-borrow subtractor built from XNOR2 difference cells and INV/AND2/OR2 borrow logic".to_string(),
            (BlockKind::Mul, _) => "an array multiplier with AND2 partial products reduced by XOR3/NAND2 full adders and XOR2/AND2 half adders".to_string(),
            (BlockKind::Cmp(CmpOp::Eq), _) => "an equality comparator that ANDs per-bit XNOR2 matches".to_string(),
            (BlockKind::Cmp(_), _) => "a magnitude comparator that ripples from the least significant bit with XNOR2 equality, NOR2 bit compares and AOI21 merge cells".to_string(),
            (BlockKind::Mux, 0) => "a bank of MUX2 cells sharing one select line".to_string(),
            (BlockKind::Mux, _) => "a NAND2-based two-way multiplexer per bit with an inverted select".to_string(),
        });
    }
    let has_mux = spec.blocks.iter().any(|b| b.kind == BlockKind::Mux);
    let control = if has_mux {
        "a select signal steers which operand reaches the output; there is no state machine."
    } else {
        "none; data flows from inputs to outputs without selection."
    };
    format!(
        "Combinational logic: {}.\nSequential behavior: none; the design has no registers or clock.\nControl flow: {control}\n",
        logic.join("; followed by ")
    )
}

/// One generated design with all reference artifacts.
#[derive(Debug, Clone)]
pub struct GeneratedDesign {
    pub spec: DesignSpec,
    pub netlist: Netlist,
    /// One label per gate, in netlist order.
    pub gate_labels: Vec<FunctionLabel>,
    pub rtl: String,
    pub testbench: String,
    pub func_desc: String,
    pub impl_desc: String,
}

impl GeneratedDesign {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Instance name to label.
    pub fn label_map(&self) -> BTreeMap<String, FunctionLabel> {
        self.netlist
            .gates
            .iter()
            .zip(&self.gate_labels)
            .map(|(g, l)| (g.instance_name.clone(), *l))
            .collect()
    }
}

fn design_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index as u64 + 1);
    r
}

pub fn generate_design(
    cfg: &CorpusConfig,
    index: usize,
    lib: &CellLibrary,
) -> Result<GeneratedDesign> {
    let mut rng = design_rng(cfg.seed, index);
    let spec = random_spec(&mut rng, cfg, index);
    let (netlist, gate_labels) = lower(&spec, lib)?;
    let vectors = test_vectors(&spec, cfg, &mut rng);
    Ok(GeneratedDesign {
        rtl: golden_rtl(&spec),
        testbench: testbench(&spec, &vectors),
        func_desc: describe_function(&spec),
        impl_desc: describe_implementation(&spec),
        spec,
        netlist,
        gate_labels,
    })
}

/// Generates `cfg.designs` designs; output depends only on `cfg`.
pub fn generate_synthetic_corpus(
    cfg: &CorpusConfig,
    lib: &CellLibrary,
) -> Result<Vec<GeneratedDesign>> {
    (0..cfg.designs)
        .into_par_iter()
        .map(|i| generate_design(cfg, i, lib))
        .collect()
}

/// A design made of one block over inputs `a`, `b` (and `sel`).
pub fn single_block_spec(kind: BlockKind, width: u32, style: u8, name: &str) -> DesignSpec {
    let mut inputs = vec![("a".to_string(), width), ("b".to_string(), width)];
    let args = if kind == BlockKind::Mux {
        inputs.push(("sel".to_string(), 1));
        vec![Operand::Input(2), Operand::Input(0), Operand::Input(1)]
    } else {
        vec![Operand::Input(0), Operand::Input(1)]
    };
    DesignSpec {
        name: name.to_string(),
        width,
        inputs,
        blocks: vec![Block { kind, args, style }],
    }
}

pub fn all_kinds() -> Vec<BlockKind> {
    vec![
        BlockKind::Add,
        BlockKind::Sub,
        BlockKind::Mul,
        BlockKind::Cmp(CmpOp::Gt),
        BlockKind::Cmp(CmpOp::Lt),
        BlockKind::Cmp(CmpOp::Eq),
        BlockKind::Mux,
    ]
}
