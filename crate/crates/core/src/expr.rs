// SPDX-License-Identifier: Apache-2.0

//! Symbolic Boolean expressions attached to graph nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{NetlistError, Result};

/// Maximum number of support variables accepted by [`truth_table`].
pub const MAX_TRUTH_TABLE_SUPPORT: usize = 16;

/// Expression tree over net references and constants.
///
/// `And`, `Or` and `Xor` are n-ary; chains of the same operator are
/// flattened when parsed from a template.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Const(bool),
    Var(String),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
    Xor(Vec<BoolExpr>),
}

/// Operator counts of an expression tree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub not: usize,
    pub and: usize,
    pub or: usize,
    pub xor: usize,
}

impl BoolExpr {
    pub fn var(name: impl Into<String>) -> Self {
        BoolExpr::Var(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(e))
    }

    /// Sorted set of variable names.
    pub fn support(&self) -> Vec<String> {
        let mut set = BTreeSet::new();
        self.collect_support(&mut set);
        set.into_iter().collect()
    }

    fn collect_support(&self, out: &mut BTreeSet<String>) {
        match self {
            BoolExpr::Const(_) => {}
            BoolExpr::Var(v) => {
                out.insert(v.clone());
            }
            BoolExpr::Not(e) => e.collect_support(out),
            BoolExpr::And(xs) | BoolExpr::Or(xs) | BoolExpr::Xor(xs) => {
                for x in xs {
                    x.collect_support(out);
                }
            }
        }
    }

    /// Depth of the operator tree; leaves have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            BoolExpr::Const(_) | BoolExpr::Var(_) => 0,
            BoolExpr::Not(e) => 1 + e.depth(),
            BoolExpr::And(xs) | BoolExpr::Or(xs) | BoolExpr::Xor(xs) => {
                1 + xs.iter().map(BoolExpr::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn op_counts(&self) -> OpCounts {
        let mut c = OpCounts::default();
        self.count_ops(&mut c);
        c
    }

    fn count_ops(&self, c: &mut OpCounts) {
        match self {
            BoolExpr::Const(_) | BoolExpr::Var(_) => {}
            BoolExpr::Not(e) => {
                c.not += 1;
                e.count_ops(c);
            }
            BoolExpr::And(xs) => {
                c.and += 1;
                xs.iter().for_each(|x| x.count_ops(c));
            }
            BoolExpr::Or(xs) => {
                c.or += 1;
                xs.iter().for_each(|x| x.count_ops(c));
            }
            BoolExpr::Xor(xs) => {
                c.xor += 1;
                xs.iter().for_each(|x| x.count_ops(c));
            }
        }
    }

    /// Evaluates under `assign`; unbound variables are an error.
    pub fn eval(&self, assign: &dyn Fn(&str) -> Option<bool>) -> Result<bool> {
        Ok(match self {
            BoolExpr::Const(b) => *b,
            BoolExpr::Var(v) => assign(v).ok_or_else(|| NetlistError::UndeclaredNet(v.clone()))?,
            BoolExpr::Not(e) => !e.eval(assign)?,
            BoolExpr::And(xs) => {
                let mut acc = true;
                for x in xs {
                    acc &= x.eval(assign)?;
                }
                acc
            }
            BoolExpr::Or(xs) => {
                let mut acc = false;
                for x in xs {
                    acc |= x.eval(assign)?;
                }
                acc
            }
            BoolExpr::Xor(xs) => {
                let mut acc = false;
                for x in xs {
                    acc ^= x.eval(assign)?;
                }
                acc
            }
        })
    }

    /// Replaces every variable through `f`.
    pub fn substitute(&self, f: &dyn Fn(&str) -> BoolExpr) -> BoolExpr {
        match self {
            BoolExpr::Const(b) => BoolExpr::Const(*b),
            BoolExpr::Var(v) => f(v),
            BoolExpr::Not(e) => BoolExpr::Not(Box::new(e.substitute(f))),
            BoolExpr::And(xs) => BoolExpr::And(xs.iter().map(|x| x.substitute(f)).collect()),
            BoolExpr::Or(xs) => BoolExpr::Or(xs.iter().map(|x| x.substitute(f)).collect()),
            BoolExpr::Xor(xs) => BoolExpr::Xor(xs.iter().map(|x| x.substitute(f)).collect()),
        }
    }

    /// Parses a cell expression template such as `!((A & B) | C)`.
    ///
    /// Precedence from tightest: `!`/`~`, `&`, `^`, `|`.
    pub fn parse_template(text: &str) -> std::result::Result<BoolExpr, String> {
        let mut p = TemplateParser {
            chars: text.chars().collect(),
            pos: 0,
        };
        let e = p.parse_or()?;
        p.skip_ws();
        if p.pos != p.chars.len() {
            return Err(format!(
                "unexpected `{}` at offset {}",
                p.chars[p.pos], p.pos
            ));
        }
        Ok(e)
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, name: &str, xs: &[BoolExpr]) -> fmt::Result {
            write!(f, "{name}(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, ")")
        }
        match self {
            BoolExpr::Const(b) => write!(f, "{}", u8::from(*b)),
            BoolExpr::Var(v) => write!(f, "{v}"),
            BoolExpr::Not(e) => write!(f, "NOT({e})"),
            BoolExpr::And(xs) => join(f, "AND", xs),
            BoolExpr::Or(xs) => join(f, "OR", xs),
            BoolExpr::Xor(xs) => join(f, "XOR", xs),
        }
    }
}

struct TemplateParser {
    chars: Vec<char>,
    pos: usize,
}

impl TemplateParser {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn binary(
        &mut self,
        op: char,
        next: fn(&mut Self) -> std::result::Result<BoolExpr, String>,
        build: fn(Vec<BoolExpr>) -> BoolExpr,
    ) -> std::result::Result<BoolExpr, String> {
        let mut items = vec![next(self)?];
        while self.peek() == Some(op) {
            self.pos += 1;
            items.push(next(self)?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            build(items)
        })
    }

    fn parse_or(&mut self) -> std::result::Result<BoolExpr, String> {
        self.binary('|', Self::parse_xor, |xs| {
            BoolExpr::Or(flatten(xs, Kind::Or))
        })
    }

    fn parse_xor(&mut self) -> std::result::Result<BoolExpr, String> {
        self.binary('^', Self::parse_and, |xs| {
            BoolExpr::Xor(flatten(xs, Kind::Xor))
        })
    }

    fn parse_and(&mut self) -> std::result::Result<BoolExpr, String> {
        self.binary('&', Self::parse_unary, |xs| {
            BoolExpr::And(flatten(xs, Kind::And))
        })
    }

    fn parse_unary(&mut self) -> std::result::Result<BoolExpr, String> {
        match self.peek() {
            Some('!') | Some('~') => {
                self.pos += 1;
                Ok(BoolExpr::not(self.parse_unary()?))
            }
            Some('(') => {
                self.pos += 1;
                let e = self.parse_or()?;
                if self.peek() != Some(')') {
                    return Err(format!("expected `)` at offset {}", self.pos));
                }
                self.pos += 1;
                Ok(e)
            }
            Some('0') => {
                self.pos += 1;
                Ok(BoolExpr::Const(false))
            }
            Some('1') => {
                self.pos += 1;
                Ok(BoolExpr::Const(true))
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_ascii_alphanumeric() || self.chars[self.pos] == '_')
                {
                    self.pos += 1;
                }
                Ok(BoolExpr::Var(self.chars[start..self.pos].iter().collect()))
            }
            Some(c) => Err(format!("unexpected `{c}` at offset {}", self.pos)),
            None => Err("unexpected end of expression".to_string()),
        }
    }
}

#[derive(PartialEq)]
enum Kind {
    And,
    Or,
    Xor,
}

fn flatten(xs: Vec<BoolExpr>, kind: Kind) -> Vec<BoolExpr> {
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        match (x, &kind) {
            (BoolExpr::And(inner), Kind::And)
            | (BoolExpr::Or(inner), Kind::Or)
            | (BoolExpr::Xor(inner), Kind::Xor) => out.extend(inner),
            (x, _) => out.push(x),
        }
    }
    out
}

/// Truth table of an expression over its sorted support.
///
/// Bit `i` is the value under the `i`-th assignment in lexicographic order,
/// where the first support variable is the most significant position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthTable {
    pub support: Vec<String>,
    pub bits: Vec<bool>,
}

impl TruthTable {
    /// Packs up to 64 bits, bit `i` of the table at bit `i` of the word.
    pub fn to_u64(&self) -> Option<u64> {
        if self.bits.len() > 64 {
            return None;
        }
        Some(
            self.bits
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &b)| acc | (u64::from(b) << i)),
        )
    }
}

impl fmt::Display for TruthTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", u8::from(b))?;
        }
        Ok(())
    }
}

pub fn truth_table(expr: &BoolExpr) -> Result<TruthTable> {
    let support = expr.support();
    let n = support.len();
    if n > MAX_TRUTH_TABLE_SUPPORT {
        return Err(NetlistError::SupportTooLarge(n));
    }
    let index: BTreeMap<&str, usize> = support
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut bits = Vec::with_capacity(1 << n);
    for row in 0..(1usize << n) {
        let lookup = |v: &str| index.get(v).map(|&k| (row >> (n - 1 - k)) & 1 == 1);
        bits.push(expr.eval(&lookup)?);
    }
    Ok(TruthTable { support, bits })
}
