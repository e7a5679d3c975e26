// SPDX-License-Identifier: Apache-2.0

//! Cell libraries.
//!
//! A library is a line-oriented text file, one cell per line:
//!
//! ```text
//! CELL <name> IN <p1,p2,...> OUT <p> EXPR <template> [SEQ CLK <p> D <p>]
//! ```
//!
//! `#` starts a comment. Templates use `!`, `&`, `^`, `|`, parentheses and
//! the constants `0`/`1` over the declared input ports.

use std::collections::BTreeMap;

use crate::error::{NetlistError, Result};
use crate::expr::BoolExpr;

/// Clock and data pins of a sequential cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqPins {
    pub clock: String,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellDef {
    pub name: String,
    pub inputs: Vec<String>,
    pub output: String,
    pub expr: BoolExpr,
    pub sequential: Option<SeqPins>,
}

impl CellDef {
    pub fn is_sequential(&self) -> bool {
        self.sequential.is_some()
    }

    /// All formal ports, inputs first.
    pub fn ports(&self) -> impl Iterator<Item = &str> {
        self.inputs
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.output.as_str()))
    }

    pub fn is_input(&self, port: &str) -> bool {
        self.inputs.iter().any(|p| p == port)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.inputs.is_empty() {
            return Err(format!("cell {} has no inputs", self.name));
        }
        for (i, p) in self.inputs.iter().enumerate() {
            if self.inputs[..i].contains(p) || *p == self.output {
                return Err(format!("cell {} repeats port {p}", self.name));
            }
        }
        for v in self.expr.support() {
            if !self.is_input(&v) {
                return Err(format!(
                    "cell {} expression references undeclared port {v}",
                    self.name
                ));
            }
        }
        if let Some(seq) = &self.sequential {
            if !self.is_input(&seq.clock) || !self.is_input(&seq.data) {
                return Err(format!("cell {} clock/data pins must be inputs", self.name));
            }
            if seq.clock == seq.data {
                return Err(format!("cell {} clock and data pins coincide", self.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellLibrary {
    cells: BTreeMap<String, CellDef>,
}

const BUILTIN: &str = "\
# Built-in generic library
CELL INV   IN A       OUT Y EXPR !A
CELL BUF   IN A       OUT Y EXPR A
CELL AND2  IN A,B     OUT Y EXPR A & B
CELL AND3  IN A,B,C   OUT Y EXPR A & B & C
CELL AND4  IN A,B,C,D OUT Y EXPR A & B & C & D
CELL NAND2 IN A,B     OUT Y EXPR !(A & B)
CELL NAND3 IN A,B,C   OUT Y EXPR !(A & B & C)
CELL NAND4 IN A,B,C,D OUT Y EXPR !(A & B & C & D)
CELL OR2   IN A,B     OUT Y EXPR A | B
CELL OR3   IN A,B,C   OUT Y EXPR A | B | C
CELL OR4   IN A,B,C,D OUT Y EXPR A | B | C | D
CELL NOR2  IN A,B     OUT Y EXPR !(A | B)
CELL NOR3  IN A,B,C   OUT Y EXPR !(A | B | C)
CELL NOR4  IN A,B,C,D OUT Y EXPR !(A | B | C | D)
CELL XOR2  IN A,B     OUT Y EXPR A ^ B
CELL XNOR2 IN A,B     OUT Y EXPR !(A ^ B)
CELL XOR3  IN A,B,C   OUT Y EXPR A ^ B ^ C
CELL XNOR3 IN A,B,C   OUT Y EXPR !(A ^ B ^ C)
CELL AOI21 IN A,B,C   OUT Y EXPR !((A & B) | C)
CELL AOI22 IN A,B,C,D OUT Y EXPR !((A & B) | (C & D))
CELL OAI21 IN A,B,C   OUT Y EXPR !((A | B) & C)
CELL OAI22 IN A,B,C,D OUT Y EXPR !((A | B) & (C | D))
CELL MUX2  IN A,B,S   OUT Y EXPR (A & !S) | (B & S)
CELL DFF   IN CLK,D   OUT Q EXPR D SEQ CLK CLK D D
";

impl CellLibrary {
    /// The library shipped with the crate (24 generic cells).
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("built-in library is well formed")
    }

    pub fn builtin_text() -> &'static str {
        BUILTIN
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lib = CellLibrary::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| NetlistError::Library { line: line_no, msg };
            let def = parse_cell_line(line).map_err(err)?;
            def.validate().map_err(err)?;
            if lib.cells.contains_key(&def.name) {
                return Err(err(format!("duplicate cell {}", def.name)));
            }
            lib.cells.insert(def.name.clone(), def);
        }
        Ok(lib)
    }

    pub fn insert(&mut self, def: CellDef) -> Result<()> {
        def.validate()
            .map_err(|msg| NetlistError::Library { line: 0, msg })?;
        self.cells.insert(def.name.clone(), def);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&CellDef> {
        self.cells.get(name)
    }

    pub fn cell(&self, name: &str) -> Result<&CellDef> {
        self.get(name)
            .ok_or_else(|| NetlistError::UnknownCell(name.to_string()))
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellDef> {
        self.cells.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Position of a cell in the sorted name order; used for one-hot encodings.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.cells.keys().position(|k| k == name)
    }

    /// Serializes back to the line format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in self.cells.values() {
            out.push_str(&format!(
                "CELL {} IN {} OUT {} EXPR {}",
                c.name,
                c.inputs.join(","),
                c.output,
                template_text(&c.expr)
            ));
            if let Some(seq) = &c.sequential {
                out.push_str(&format!(" SEQ CLK {} D {}", seq.clock, seq.data));
            }
            out.push('\n');
        }
        out
    }
}

fn template_text(e: &BoolExpr) -> String {
    fn join(xs: &[BoolExpr], op: &str) -> String {
        let parts: Vec<String> = xs
            .iter()
            .map(|x| format!("({})", template_text(x)))
            .collect();
        parts.join(op)
    }
    match e {
        BoolExpr::Const(b) => u8::from(*b).to_string(),
        BoolExpr::Var(v) => v.clone(),
        BoolExpr::Not(x) => format!("!({})", template_text(x)),
        BoolExpr::And(xs) => join(xs, " & "),
        BoolExpr::Or(xs) => join(xs, " | "),
        BoolExpr::Xor(xs) => join(xs, " ^ "),
    }
}

fn parse_cell_line(line: &str) -> std::result::Result<CellDef, String> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let expect = |i: usize, kw: &str| -> std::result::Result<(), String> {
        match words.get(i) {
            Some(w) if *w == kw => Ok(()),
            other => Err(format!("expected `{kw}`, found {other:?}")),
        }
    };
    expect(0, "CELL")?;
    let name = words.get(1).ok_or("missing cell name")?.to_string();
    expect(2, "IN")?;
    let inputs: Vec<String> = words
        .get(3)
        .ok_or("missing input list")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    expect(4, "OUT")?;
    let output = words.get(5).ok_or("missing output port")?.to_string();
    expect(6, "EXPR")?;
    let seq_at = words.iter().position(|w| *w == "SEQ");
    let expr_words = &words[7..seq_at.unwrap_or(words.len())];
    if expr_words.is_empty() {
        return Err("missing expression".to_string());
    }
    let expr = BoolExpr::parse_template(&expr_words.join(" "))?;
    let sequential = match seq_at {
        None => None,
        Some(at) => {
            let rest = &words[at + 1..];
            if rest.len() != 4 || rest[0] != "CLK" || rest[2] != "D" {
                return Err("expected `SEQ CLK <p> D <p>`".to_string());
            }
            Some(SeqPins {
                clock: rest[1].to_string(),
                data: rest[3].to_string(),
            })
        }
    };
    Ok(CellDef {
        name,
        inputs,
        output,
        expr,
        sequential,
    })
}
