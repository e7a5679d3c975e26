// SPDX-License-Identifier: Apache-2.0

//! Zero-delay interpreter for the parsed subset.
//!
//! Values are unsigned and at most 64 bits wide; there are no `x`/`z`
//! states, so `===` behaves like `==`. Expression widths follow the usual
//! context rules: operands of arithmetic and bitwise operators are extended
//! to the width of the assignment context, comparison operands to the wider
//! of the two sides.

use std::collections::BTreeMap;
use std::rc::Rc;

use super::parse::{DeclKind, Expr, Instance, Item, LValue, Module, Stmt};
use crate::error::{EvalError, Result};

const MAX_SETTLE_ROUNDS: usize = 1000;
const MAX_LOOP_ITERATIONS: usize = 100_000;
const MAX_DEPTH: usize = 16;

fn rtl(msg: impl Into<String>) -> EvalError {
    EvalError::Rtl(msg.into())
}

fn mask(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

#[derive(Debug, Clone)]
struct Signal {
    name: String,
    width: u32,
    lsb: i64,
    descending: bool,
    value: u64,
}

impl Signal {
    /// Bit offset of declared index `idx`, if in range.
    fn offset(&self, idx: i64) -> Option<u32> {
        let off = if self.descending {
            idx - self.lsb
        } else {
            self.lsb - idx
        };
        (0..i64::from(self.width))
            .contains(&off)
            .then_some(off as u32)
    }
}

#[derive(Debug)]
struct Scope {
    module: Rc<Module>,
    names: BTreeMap<String, usize>,
}

#[derive(Debug)]
enum Process {
    Assign {
        scope: usize,
        lhs: LValue,
        rhs: Expr,
    },
    Always {
        scope: usize,
        body: Stmt,
    },
    /// Child input port driven from an expression in the parent.
    PortIn {
        child: usize,
        scope: usize,
        expr: Expr,
    },
    /// Parent lvalue driven by a child output port.
    PortOut {
        scope: usize,
        lhs: LValue,
        child: usize,
    },
}

/// An elaborated design ready to run.
#[derive(Debug)]
pub struct Simulation {
    signals: Vec<Signal>,
    scopes: Vec<Scope>,
    procs: Vec<Process>,
    initials: Vec<(usize, Stmt)>,
    output: String,
    finished: bool,
}

impl Simulation {
    /// Elaborates `top` from `modules`.
    pub fn elaborate(modules: &[Module], top: &str) -> Result<Simulation> {
        let lib: BTreeMap<String, Rc<Module>> = modules
            .iter()
            .map(|m| (m.name.clone(), Rc::new(m.clone())))
            .collect();
        for m in lib.values() {
            check_module(m)?;
        }
        let mut sim = Simulation {
            signals: Vec::new(),
            scopes: Vec::new(),
            procs: Vec::new(),
            initials: Vec::new(),
            output: String::new(),
            finished: false,
        };
        let m = lib
            .get(top)
            .ok_or_else(|| rtl(format!("unknown module `{top}`")))?
            .clone();
        sim.instantiate(&lib, m, top, 0)?;
        Ok(sim)
    }

    fn instantiate(
        &mut self,
        lib: &BTreeMap<String, Rc<Module>>,
        m: Rc<Module>,
        path: &str,
        depth: usize,
    ) -> Result<usize> {
        if depth > MAX_DEPTH {
            return Err(rtl("instance hierarchy too deep"));
        }
        let mut names = BTreeMap::new();
        for (n, d) in &m.decls {
            names.insert(n.clone(), self.signals.len());
            self.signals.push(Signal {
                name: format!("{path}.{n}"),
                width: d.width(),
                lsb: d.lsb,
                descending: d.msb >= d.lsb,
                value: 0,
            });
        }
        let scope = self.scopes.len();
        self.scopes.push(Scope {
            module: m.clone(),
            names,
        });
        for item in &m.items {
            match item {
                Item::Assign(l, e) => self.procs.push(Process::Assign {
                    scope,
                    lhs: l.clone(),
                    rhs: e.clone(),
                }),
                Item::Always(s) => self.procs.push(Process::Always {
                    scope,
                    body: s.clone(),
                }),
                Item::Initial(s) => self.initials.push((scope, s.clone())),
                Item::Instance(inst) => self.instance(lib, scope, inst, path, depth)?,
            }
        }
        Ok(scope)
    }

    fn instance(
        &mut self,
        lib: &BTreeMap<String, Rc<Module>>,
        parent: usize,
        inst: &Instance,
        path: &str,
        depth: usize,
    ) -> Result<()> {
        let child_mod = lib
            .get(&inst.module)
            .ok_or_else(|| {
                rtl(format!(
                    "unknown module `{}` for instance `{}`",
                    inst.module, inst.name
                ))
            })?
            .clone();
        let conns: Vec<(String, Option<Expr>)> = if inst.named.is_empty() {
            if inst.positional.len() > child_mod.ports.len() {
                return Err(rtl(format!("too many connections to `{}`", inst.name)));
            }
            child_mod
                .ports
                .iter()
                .cloned()
                .zip(inst.positional.iter().cloned().map(Some))
                .collect()
        } else {
            inst.named.clone()
        };
        let child = self.instantiate(
            lib,
            child_mod.clone(),
            &format!("{path}.{}", inst.name),
            depth + 1,
        )?;
        for (port, expr) in conns {
            let dir = child_mod
                .port_dir(&port)
                .filter(|_| child_mod.ports.contains(&port))
                .ok_or_else(|| rtl(format!("module `{}` has no port `{port}`", inst.module)))?;
            let Some(expr) = expr else { continue };
            let child_sig = self.scopes[child].names[&port];
            if dir == DeclKind::Input {
                self.procs.push(Process::PortIn {
                    child: child_sig,
                    scope: parent,
                    expr,
                });
            } else {
                let lhs = expr_to_lvalue(&expr)
                    .ok_or_else(|| rtl(format!("output port `{port}` needs a net connection")))?;
                self.procs.push(Process::PortOut {
                    scope: parent,
                    lhs,
                    child: child_sig,
                });
            }
        }
        Ok(())
    }

    /// Runs every `initial` block to completion or `$finish`.
    pub fn run(&mut self) -> Result<()> {
        self.settle()?;
        let initials = std::mem::take(&mut self.initials);
        for (scope, s) in &initials {
            if self.finished {
                break;
            }
            self.exec(*scope, s, true)?;
        }
        self.initials = initials;
        self.settle()
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    /// Current value of a hierarchical signal such as `tb.dut.s`.
    pub fn value(&self, name: &str) -> Option<u64> {
        self.signals
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.value)
    }

    /// Sets a top-level signal by local name (the first scope).
    pub fn set(&mut self, name: &str, value: u64) -> Result<()> {
        let idx = *self.scopes[0]
            .names
            .get(name)
            .ok_or_else(|| rtl(format!("unknown signal `{name}`")))?;
        let w = self.signals[idx].width;
        self.signals[idx].value = value & mask(w);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        self.scopes[0]
            .names
            .get(name)
            .map(|&i| self.signals[i].value)
    }

    /// Re-evaluates continuous logic until no signal changes.
    pub fn settle(&mut self) -> Result<()> {
        for _ in 0..MAX_SETTLE_ROUNDS {
            let before: Vec<u64> = self.signals.iter().map(|s| s.value).collect();
            for k in 0..self.procs.len() {
                self.run_process(k)?;
            }
            if self.signals.iter().zip(&before).all(|(s, b)| s.value == *b) {
                return Ok(());
            }
        }
        Err(rtl("combinational logic did not settle"))
    }

    fn run_process(&mut self, k: usize) -> Result<()> {
        // processes are immutable; a raw index avoids cloning their bodies
        let procs = std::mem::take(&mut self.procs);
        let r = match &procs[k] {
            Process::Assign { scope, lhs, rhs } => self.assign(*scope, lhs, rhs),
            Process::Always { scope, body } => self.exec(*scope, body, false),
            Process::PortIn { child, scope, expr } => {
                let w = self.signals[*child].width.max(self.width(*scope, expr)?);
                let v = self.eval(*scope, expr, w)?;
                let cw = self.signals[*child].width;
                self.signals[*child].value = v & mask(cw);
                Ok(())
            }
            Process::PortOut { scope, lhs, child } => {
                let v = self.signals[*child].value;
                self.write(*scope, lhs, v)
            }
        };
        self.procs = procs;
        r
    }

    fn lookup(&self, scope: usize, name: &str) -> Result<usize> {
        self.scopes[scope]
            .names
            .get(name)
            .copied()
            .ok_or_else(|| rtl(format!("unknown signal `{name}`")))
    }

    fn param(&self, scope: usize, name: &str) -> Option<u64> {
        self.scopes[scope].module.params.get(name).copied()
    }

    fn lvalue_width(&self, scope: usize, l: &LValue) -> Result<u32> {
        Ok(match l {
            LValue::Whole(n) => self.signals[self.lookup(scope, n)?].width,
            LValue::Bit(..) => 1,
            LValue::Range(_, a, b) => ((a - b).unsigned_abs() + 1) as u32,
            LValue::Concat(parts) => parts
                .iter()
                .map(|p| self.lvalue_width(scope, p))
                .sum::<Result<u32>>()?,
        })
    }

    fn assign(&mut self, scope: usize, lhs: &LValue, rhs: &Expr) -> Result<()> {
        let lw = self.lvalue_width(scope, lhs)?;
        let ctx = lw.max(self.width(scope, rhs)?).min(64);
        let v = self.eval(scope, rhs, ctx)?;
        self.write(scope, lhs, v & mask(lw))
    }

    fn write(&mut self, scope: usize, lhs: &LValue, v: u64) -> Result<()> {
        match lhs {
            LValue::Whole(n) => {
                let i = self.lookup(scope, n)?;
                let w = self.signals[i].width;
                self.signals[i].value = v & mask(w);
            }
            LValue::Bit(n, idx) => {
                let i = self.lookup(scope, n)?;
                let iw = self.width(scope, idx)?;
                let at = self.eval(scope, idx, iw)? as i64;
                if let Some(off) = self.signals[i].offset(at) {
                    let s = &mut self.signals[i];
                    s.value = (s.value & !(1 << off)) | ((v & 1) << off);
                }
            }
            LValue::Range(n, a, b) => {
                let i = self.lookup(scope, n)?;
                let (lo, w) = self.range_offset(i, *a, *b)?;
                let m = mask(w) << lo;
                let s = &mut self.signals[i];
                s.value = (s.value & !m) | ((v << lo) & m);
            }
            LValue::Concat(parts) => {
                let mut shift = 0;
                for p in parts.iter().rev() {
                    let w = self.lvalue_width(scope, p)?;
                    self.write(scope, p, (v >> shift.min(63)) & mask(w))?;
                    shift += w;
                }
            }
        }
        Ok(())
    }

    fn range_offset(&self, sig: usize, a: i64, b: i64) -> Result<(u32, u32)> {
        let s = &self.signals[sig];
        match (s.offset(a), s.offset(b)) {
            (Some(x), Some(y)) => Ok((x.min(y), x.max(y) - x.min(y) + 1)),
            _ => Err(rtl(format!(
                "part-select [{a}:{b}] out of range for `{}`",
                s.name
            ))),
        }
    }

    fn exec(&mut self, scope: usize, s: &Stmt, top_level: bool) -> Result<()> {
        if self.finished {
            return Ok(());
        }
        match s {
            Stmt::Block(v) => {
                for x in v {
                    self.exec(scope, x, top_level)?;
                }
            }
            Stmt::Assign(l, e) => {
                self.assign(scope, l, e)?;
                if top_level {
                    self.settle()?;
                }
            }
            Stmt::If(c, t, f) => {
                let w = self.width(scope, c)?;
                if self.eval(scope, c, w)? != 0 {
                    self.exec(scope, t, top_level)?;
                } else if let Some(f) = f {
                    self.exec(scope, f, top_level)?;
                }
            }
            Stmt::Case(sel, arms, default) => {
                let sw = self.width(scope, sel)?;
                for (labels, body) in arms {
                    for l in labels {
                        let w = sw.max(self.width(scope, l)?);
                        if self.eval(scope, sel, w)? == self.eval(scope, l, w)? {
                            return self.exec(scope, body, top_level);
                        }
                    }
                }
                if let Some(d) = default {
                    self.exec(scope, d, top_level)?;
                }
            }
            Stmt::For(init, cond, step, body) => {
                self.exec(scope, init, top_level)?;
                let mut n = 0;
                loop {
                    let w = self.width(scope, cond)?;
                    if self.eval(scope, cond, w)? == 0 {
                        break;
                    }
                    n += 1;
                    if n > MAX_LOOP_ITERATIONS {
                        return Err(rtl("loop iteration limit exceeded"));
                    }
                    self.exec(scope, body, top_level)?;
                    self.exec(scope, step, top_level)?;
                }
            }
            Stmt::Delay(s) => {
                if top_level {
                    self.settle()?;
                }
                self.exec(scope, s, top_level)?;
            }
            Stmt::Display(args) => {
                if top_level {
                    self.settle()?;
                }
                let line = self.format(scope, args)?;
                self.output.push_str(&line);
                self.output.push('\n');
            }
            Stmt::Finish => {
                if top_level {
                    self.finished = true;
                }
            }
            Stmt::Empty => {}
        }
        Ok(())
    }

    fn format(&self, scope: usize, args: &[Expr]) -> Result<String> {
        let value = |e: &Expr| -> Result<(u64, u32)> {
            let w = self.width(scope, e)?;
            Ok((self.eval(scope, e, w)?, w))
        };
        let (fmt, rest) = match args.first() {
            Some(Expr::Str(f)) => (f.as_str(), &args[1..]),
            _ => {
                let parts = args
                    .iter()
                    .map(|e| value(e).map(|v| v.0.to_string()))
                    .collect::<Result<Vec<_>>>()?;
                return Ok(parts.join(" "));
            }
        };
        let mut out = String::new();
        let mut it = rest.iter();
        let mut chars = fmt.chars().peekable();
        while let Some(c) = chars.next() {
            if c != '%' {
                out.push(c);
                continue;
            }
            while chars.peek().is_some_and(char::is_ascii_digit) {
                chars.next();
            }
            let spec = chars.next().unwrap_or('%').to_ascii_lowercase();
            if spec == '%' {
                out.push('%');
                continue;
            }
            let arg = it.next().ok_or_else(|| rtl("too few $display arguments"))?;
            if let Expr::Str(s) = arg {
                out.push_str(s);
                continue;
            }
            let (v, w) = value(arg)?;
            match spec {
                'd' => out.push_str(&v.to_string()),
                'b' => out.push_str(&format!("{v:0width$b}", width = w as usize)),
                'h' | 'x' => out.push_str(&format!("{v:0width$x}", width = w.div_ceil(4) as usize)),
                'o' => out.push_str(&format!("{v:o}")),
                other => return Err(rtl(format!("unsupported format %{other}"))),
            }
        }
        Ok(out)
    }

    /// Self-determined width.
    fn width(&self, scope: usize, e: &Expr) -> Result<u32> {
        Ok(match e {
            Expr::Num { width, .. } => width.unwrap_or(32),
            Expr::Ident(n) => {
                if self.param(scope, n).is_some() && !self.scopes[scope].names.contains_key(n) {
                    32
                } else {
                    self.signals[self.lookup(scope, n)?].width
                }
            }
            Expr::Index(..) => 1,
            Expr::Range(_, a, b) => ((a - b).unsigned_abs() + 1) as u32,
            Expr::IndexedRange { width, .. } => *width,
            Expr::Unary(op, a) => match *op {
                "~" | "-" | "+" => self.width(scope, a)?,
                _ => 1,
            },
            Expr::Binary(op, a, b) => match *op {
                "+" | "-" | "*" | "/" | "%" | "&" | "|" | "^" | "~^" | "^~" => {
                    self.width(scope, a)?.max(self.width(scope, b)?)
                }
                "<<" | ">>" | "<<<" | ">>>" | "**" => self.width(scope, a)?,
                _ => 1,
            },
            Expr::Ternary(_, t, f) => self.width(scope, t)?.max(self.width(scope, f)?),
            Expr::Concat(parts) => parts
                .iter()
                .map(|p| self.width(scope, p))
                .sum::<Result<u32>>()?,
            Expr::Repeat(n, parts) => {
                n * parts
                    .iter()
                    .map(|p| self.width(scope, p))
                    .sum::<Result<u32>>()?
            }
            Expr::Str(_) => return Err(rtl("string used as a value")),
        }
        .min(64))
    }

    /// Value of `e` evaluated in a context of width `ctx`, masked to it.
    fn eval(&self, scope: usize, e: &Expr, ctx: u32) -> Result<u64> {
        let m = mask(ctx);
        let v = match e {
            Expr::Num { value, .. } => *value,
            Expr::Ident(n) => match self.scopes[scope].names.get(n) {
                Some(&i) => self.signals[i].value,
                None => self
                    .param(scope, n)
                    .ok_or_else(|| rtl(format!("unknown signal `{n}`")))?,
            },
            Expr::Index(n, idx) => {
                let i = self.lookup(scope, n)?;
                let iw = self.width(scope, idx)?;
                let at = self.eval(scope, idx, iw)? as i64;
                match self.signals[i].offset(at) {
                    Some(off) => (self.signals[i].value >> off) & 1,
                    None => 0,
                }
            }
            Expr::Range(n, a, b) => {
                let i = self.lookup(scope, n)?;
                let (lo, w) = self.range_offset(i, *a, *b)?;
                (self.signals[i].value >> lo) & mask(w)
            }
            Expr::IndexedRange {
                name,
                base,
                width,
                up,
            } => {
                let i = self.lookup(scope, name)?;
                let bw = self.width(scope, base)?;
                let b = self.eval(scope, base, bw)? as i64;
                let (hi, lo) = if *up {
                    (b + i64::from(*width) - 1, b)
                } else {
                    (b, b - i64::from(*width) + 1)
                };
                let s = &self.signals[i];
                let (a, c) = if s.descending { (hi, lo) } else { (lo, hi) };
                let (lo, w) = self.range_offset(i, a, c)?;
                (s.value >> lo) & mask(w)
            }
            Expr::Unary(op, a) => match *op {
                "~" => !self.eval(scope, a, ctx)?,
                "-" => self.eval(scope, a, ctx)?.wrapping_neg(),
                "+" => self.eval(scope, a, ctx)?,
                _ => {
                    let w = self.width(scope, a)?;
                    let x = self.eval(scope, a, w)?;
                    let ones = x.count_ones();
                    u64::from(match *op {
                        "!" => x == 0,
                        "&" => x == mask(w),
                        "~&" => x != mask(w),
                        "|" => x != 0,
                        "~|" => x == 0,
                        "^" => ones % 2 == 1,
                        _ => ones % 2 == 0,
                    })
                }
            },
            Expr::Binary(op, a, b) => self.binary(scope, op, a, b, ctx)?,
            Expr::Ternary(c, t, f) => {
                let cw = self.width(scope, c)?;
                if self.eval(scope, c, cw)? != 0 {
                    self.eval(scope, t, ctx)?
                } else {
                    self.eval(scope, f, ctx)?
                }
            }
            Expr::Concat(parts) => self.concat(scope, parts)?,
            Expr::Repeat(n, parts) => {
                let w: u32 = parts
                    .iter()
                    .map(|p| self.width(scope, p))
                    .sum::<Result<u32>>()?;
                let one = self.concat(scope, parts)?;
                (0..*n).fold(0u64, |acc, _| if w >= 64 { one } else { (acc << w) | one })
            }
            Expr::Str(_) => return Err(rtl("string used as a value")),
        };
        Ok(v & m)
    }

    fn concat(&self, scope: usize, parts: &[Expr]) -> Result<u64> {
        let mut acc = 0u64;
        for p in parts {
            let w = self.width(scope, p)?;
            let v = self.eval(scope, p, w)?;
            acc = if w >= 64 { v } else { (acc << w) | v };
        }
        Ok(acc)
    }

    fn binary(&self, scope: usize, op: &str, a: &Expr, b: &Expr, ctx: u32) -> Result<u64> {
        let cmp_width = || -> Result<u32> { Ok(self.width(scope, a)?.max(self.width(scope, b)?)) };
        Ok(match op {
            "+" | "-" | "*" | "/" | "%" | "&" | "|" | "^" | "~^" | "^~" => {
                let (x, y) = (self.eval(scope, a, ctx)?, self.eval(scope, b, ctx)?);
                match op {
                    "+" => x.wrapping_add(y),
                    "-" => x.wrapping_sub(y),
                    "*" => x.wrapping_mul(y),
                    "/" => x.checked_div(y).unwrap_or(0),
                    "%" => x.checked_rem(y).unwrap_or(0),
                    "&" => x & y,
                    "|" => x | y,
                    "^" => x ^ y,
                    _ => !(x ^ y),
                }
            }
            "==" | "!=" | "===" | "!==" | "<" | "<=" | ">" | ">=" => {
                let w = cmp_width()?;
                let (x, y) = (self.eval(scope, a, w)?, self.eval(scope, b, w)?);
                u64::from(match op {
                    "==" | "===" => x == y,
                    "!=" | "!==" => x != y,
                    "<" => x < y,
                    "<=" => x <= y,
                    ">" => x > y,
                    _ => x >= y,
                })
            }
            "&&" | "||" => {
                let x = self.eval(scope, a, self.width(scope, a)?)? != 0;
                let y = self.eval(scope, b, self.width(scope, b)?)? != 0;
                u64::from(if op == "&&" { x && y } else { x || y })
            }
            "<<" | "<<<" | ">>" | ">>>" | "**" => {
                let x = self.eval(scope, a, ctx)?;
                let y = self.eval(scope, b, self.width(scope, b)?)?;
                match op {
                    "<<" | "<<<" => x
                        .checked_shl(u32::try_from(y).unwrap_or(u32::MAX))
                        .unwrap_or(0),
                    "**" => x.wrapping_pow(u32::try_from(y).unwrap_or(u32::MAX)),
                    _ => x
                        .checked_shr(u32::try_from(y).unwrap_or(u32::MAX))
                        .unwrap_or(0),
                }
            }
            other => return Err(rtl(format!("unsupported operator {other}"))),
        })
    }
}

fn expr_to_lvalue(e: &Expr) -> Option<LValue> {
    Some(match e {
        Expr::Ident(n) => LValue::Whole(n.clone()),
        Expr::Index(n, i) => LValue::Bit(n.clone(), (**i).clone()),
        Expr::Range(n, a, b) => LValue::Range(n.clone(), *a, *b),
        Expr::Concat(parts) => LValue::Concat(
            parts
                .iter()
                .map(expr_to_lvalue)
                .collect::<Option<Vec<_>>>()?,
        ),
        _ => return None,
    })
}

/// Static checks: every referenced name is declared and inputs are never
/// assigned.
fn check_module(m: &Module) -> Result<()> {
    let known = |n: &str| m.decls.contains_key(n) || m.params.contains_key(n);
    let check_expr = |e: &Expr| -> Result<()> {
        let mut stack = vec![e];
        while let Some(e) = stack.pop() {
            match e {
                Expr::Ident(n)
                | Expr::Index(n, _)
                | Expr::Range(n, ..)
                | Expr::IndexedRange { name: n, .. }
                    if !known(n) =>
                {
                    return Err(rtl(format!("module `{}`: undeclared `{n}`", m.name)));
                }
                _ => {}
            }
            match e {
                Expr::Index(_, i) => stack.push(i),
                Expr::IndexedRange { base, .. } => stack.push(base),
                Expr::Unary(_, a) => stack.push(a),
                Expr::Binary(_, a, b) => stack.extend([&**a, &**b]),
                Expr::Ternary(c, t, f) => stack.extend([&**c, &**t, &**f]),
                Expr::Concat(p) | Expr::Repeat(_, p) => stack.extend(p.iter()),
                _ => {}
            }
        }
        Ok(())
    };
    fn lvalue_names(l: &LValue, out: &mut Vec<String>) {
        match l {
            LValue::Whole(n) | LValue::Bit(n, _) | LValue::Range(n, ..) => out.push(n.clone()),
            LValue::Concat(p) => p.iter().for_each(|x| lvalue_names(x, out)),
        }
    }
    let check_lvalue = |l: &LValue| -> Result<()> {
        let mut names = Vec::new();
        lvalue_names(l, &mut names);
        for n in names {
            match m.decls.get(&n) {
                None => return Err(rtl(format!("module `{}`: undeclared `{n}`", m.name))),
                Some(d) if d.kind == DeclKind::Input => {
                    return Err(rtl(format!("module `{}`: input `{n}` is assigned", m.name)));
                }
                _ => {}
            }
        }
        if let LValue::Bit(_, e) = l {
            check_expr(e)?;
        }
        Ok(())
    };
    fn walk(s: &Stmt, f: &mut dyn FnMut(&Stmt) -> Result<()>) -> Result<()> {
        f(s)?;
        match s {
            Stmt::Block(v) => v.iter().try_for_each(|x| walk(x, f)),
            Stmt::If(_, t, e) => {
                walk(t, f)?;
                e.as_deref().map_or(Ok(()), |e| walk(e, f))
            }
            Stmt::Case(_, arms, d) => {
                arms.iter().try_for_each(|(_, b)| walk(b, f))?;
                d.as_deref().map_or(Ok(()), |d| walk(d, f))
            }
            Stmt::For(i, _, st, b) => {
                walk(i, f)?;
                walk(st, f)?;
                walk(b, f)
            }
            Stmt::Delay(x) => walk(x, f),
            _ => Ok(()),
        }
    }
    let mut check_stmt = |s: &Stmt| -> Result<()> {
        match s {
            Stmt::Assign(l, e) => {
                check_lvalue(l)?;
                check_expr(e)
            }
            Stmt::If(c, ..) | Stmt::For(_, c, ..) => check_expr(c),
            Stmt::Case(sel, arms, _) => {
                check_expr(sel)?;
                arms.iter().flat_map(|(ls, _)| ls).try_for_each(check_expr)
            }
            Stmt::Display(args) => args.iter().try_for_each(check_expr),
            _ => Ok(()),
        }
    };
    for item in &m.items {
        match item {
            Item::Assign(l, e) => {
                check_lvalue(l)?;
                check_expr(e)?;
            }
            Item::Always(s) | Item::Initial(s) => walk(s, &mut check_stmt)?,
            Item::Instance(inst) => {
                inst.named
                    .iter()
                    .filter_map(|(_, e)| e.as_ref())
                    .try_for_each(check_expr)?;
                inst.positional.iter().try_for_each(check_expr)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_modules;
    use super::*;

    fn run_top(src: &str, top: &str) -> Simulation {
        let mods = parse_modules(src).unwrap();
        let mut s = Simulation::elaborate(&mods, top).unwrap();
        s.run().unwrap();
        s
    }

    #[test]
    fn carry_is_kept_by_context_width() {
        let mut s = run_top(
            "module m(input [3:0] a, b, output [4:0] s); assign s = a + b; endmodule",
            "m",
        );
        s.set("a", 15).unwrap();
        s.set("b", 15).unwrap();
        s.settle().unwrap();
        assert_eq!(s.get("s"), Some(30));
    }

    #[test]
    fn comparison_operands_use_their_own_width() {
        let src = "module m(input [3:0] a, b, output y, output z); assign y = (a + b) > 4'd3; assign z = ~a == 4'd0; endmodule";
        let mut s = run_top(src, "m");
        s.set("a", 15).unwrap();
        s.set("b", 1).unwrap();
        s.settle().unwrap();
        // a + b wraps in four bits
        assert_eq!(s.get("y"), Some(0));
        assert_eq!(s.get("z"), Some(1));
    }

    #[test]
    fn testbench_with_instance() {
        let src = "module add(input [1:0] a, b, output [2:0] s); assign s = a + b; endmodule\n\
            module tb; reg [1:0] a, b; wire [2:0] s; integer errors;\n\
            add dut(.a(a), .b(b), .s(s));\n\
            initial begin errors = 0; a = 2'd3; b = 2'd2; #1;\n\
            if (s !== 3'd5) begin errors = errors + 1; $display(\"TEST_FAILED %d\", s); end\n\
            if (errors == 0) $display(\"ALL_TESTS_PASSED\"); $finish; end endmodule";
        let s = run_top(src, "tb");
        assert_eq!(s.output(), "ALL_TESTS_PASSED\n");
        assert_eq!(s.value("tb.dut.s"), Some(5));
    }

    #[test]
    fn always_block_case_and_loop() {
        let src = "module m(input [1:0] sel, input [3:0] a, output reg [3:0] y, output reg [2:0] n);\n\
            integer i;\n\
            always @(*) begin case (sel) 2'd0: y = a; 2'd1: y = {a[1:0], a[3:2]}; default: y = 4'd0; endcase\n\
            n = 0; for (i = 0; i < 4; i = i + 1) n = n + a[i]; end endmodule";
        let mut s = run_top(src, "m");
        s.set("sel", 1).unwrap();
        s.set("a", 0b1101).unwrap();
        s.settle().unwrap();
        assert_eq!(s.get("y"), Some(0b0111));
        assert_eq!(s.get("n"), Some(3));
    }

    #[test]
    fn elaboration_errors() {
        let mods = parse_modules("module m(input a, output y); assign y = b; endmodule").unwrap();
        assert!(Simulation::elaborate(&mods, "m").is_err());
        let mods = parse_modules("module m(input a, output y); assign a = y; endmodule").unwrap();
        assert!(Simulation::elaborate(&mods, "m").is_err());
        let mods = parse_modules("module t; wire y; nothere u(.y(y)); endmodule").unwrap();
        assert!(Simulation::elaborate(&mods, "t").is_err());
        let mods = parse_modules("module m(input a, output y); assign y = a; endmodule module t; wire y; m u(.q(y)); endmodule").unwrap();
        assert!(Simulation::elaborate(&mods, "t").is_err());
        let mods =
            parse_modules("module m(output y); wire w; assign w = ~w; assign y = w; endmodule")
                .unwrap();
        let mut s = Simulation::elaborate(&mods, "m").unwrap();
        assert!(s.run().is_err());
    }
}
