// SPDX-License-Identifier: Apache-2.0

//! Parser for a word-level Verilog subset: module headers in either port
//! style, `input`/`output`/`wire`/`reg`/`integer` declarations,
//! `parameter`/`localparam`, continuous `assign`, `always` blocks,
//! `initial` blocks, and module instances. Statements cover blocking and
//! non-blocking assignment, `if`, `case`, `for`, `begin`/`end`, delays,
//! `$display` and `$finish`.

use std::collections::BTreeMap;

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Sys(String),
    Num { width: Option<u32>, value: u64 },
    Str(String),
    Sym(&'static str),
}

const SYMBOLS: [&str; 45] = [
    "===", "!==", "<<<", ">>>", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "~&", "~|", "~^",
    "^~", "**", "+:", "-:", "(", ")", "[", "]", "{", "}", ";", ",", ":", "?", "=", "+", "-", "*",
    "/", "%", "&", "|", "^", "~", "!", "<", ">", "@", "#", ".",
];

fn err(line: usize, msg: impl Into<String>) -> EvalError {
    EvalError::Rtl(format!("line {line}: {}", msg.into()))
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let b = src.as_bytes();
    let mut i = 0;
    let mut line = 1;
    let mut out = Vec::new();
    while i < b.len() {
        let c = b[i];
        if c == b'\n' {
            line += 1;
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if src[i..].starts_with("//") {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else if src[i..].starts_with("/*") {
            let end = src[i + 2..]
                .find("*/")
                .ok_or_else(|| err(line, "unterminated comment"))?;
            line += src[i..i + 2 + end].matches('\n').count();
            i += end + 4;
        } else if c == b'`' {
            // compiler directives such as `timescale are ignored
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else if c == b'"' {
            let mut s = String::new();
            i += 1;
            while i < b.len() && b[i] != b'"' {
                if b[i] == b'\\' && i + 1 < b.len() {
                    s.push(match b[i + 1] {
                        b'n' => '\n',
                        b't' => '\t',
                        other => other as char,
                    });
                    i += 2;
                } else {
                    if b[i] == b'\n' {
                        return Err(err(line, "newline in string"));
                    }
                    s.push(b[i] as char);
                    i += 1;
                }
            }
            if i >= b.len() {
                return Err(err(line, "unterminated string"));
            }
            i += 1;
            out.push((Tok::Str(s), line));
        } else if c.is_ascii_alphabetic() || c == b'_' || c == b'$' || c == b'\\' {
            let start = i;
            if c == b'\\' {
                while i < b.len() && !b[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push((Tok::Ident(src[start + 1..i].to_string()), line));
                continue;
            }
            i += 1;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'$') {
                i += 1;
            }
            let word = &src[start..i];
            out.push((
                if c == b'$' {
                    Tok::Sys(word.to_string())
                } else {
                    Tok::Ident(word.to_string())
                },
                line,
            ));
        } else if c.is_ascii_digit() || c == b'\'' {
            let (tok, len) = lex_number(&src[i..]).map_err(|m| err(line, m))?;
            out.push((tok, line));
            i += len;
        } else {
            let sym = SYMBOLS
                .iter()
                .find(|s| src[i..].starts_with(**s))
                .ok_or_else(|| err(line, format!("unexpected character `{}`", c as char)))?;
            out.push((Tok::Sym(sym), line));
            i += sym.len();
        }
    }
    Ok(out)
}

fn lex_number(s: &str) -> std::result::Result<(Tok, usize), String> {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
        i += 1;
    }
    let size_text: String = s[..i].chars().filter(|c| *c != '_').collect();
    let mut j = i;
    while j < b.len() && b[j] == b' ' {
        j += 1;
    }
    if j >= b.len() || b[j] != b'\'' {
        let value = size_text
            .parse::<u64>()
            .map_err(|_| format!("bad number `{size_text}`"))?;
        return Ok((Tok::Num { width: None, value }, i));
    }
    let width = if size_text.is_empty() {
        None
    } else {
        let w: u32 = size_text.parse().map_err(|_| "bad width".to_string())?;
        if w == 0 || w > 64 {
            return Err(format!("unsupported literal width {w}"));
        }
        Some(w)
    };
    j += 1;
    if j < b.len() && (b[j] == b's' || b[j] == b'S') {
        j += 1;
    }
    let radix = match b.get(j).map(u8::to_ascii_lowercase) {
        Some(b'b') => 2,
        Some(b'o') => 8,
        Some(b'd') => 10,
        Some(b'h') => 16,
        _ => return Err("bad base in literal".into()),
    };
    j += 1;
    while j < b.len() && b[j] == b' ' {
        j += 1;
    }
    let start = j;
    while j < b.len() && (b[j].is_ascii_alphanumeric() || b[j] == b'_' || b[j] == b'?') {
        j += 1;
    }
    let digits: String = s[start..j].chars().filter(|c| *c != '_').collect();
    if digits.is_empty() {
        return Err("literal without digits".into());
    }
    if digits
        .chars()
        .any(|c| matches!(c.to_ascii_lowercase(), 'x' | 'z' | '?'))
    {
        return Err("x/z literals are not supported".into());
    }
    let value =
        u128::from_str_radix(&digits, radix).map_err(|_| format!("bad digits `{digits}`"))?;
    let value = match width {
        Some(w) => (value & ((1u128 << w) - 1)) as u64,
        None => value as u64,
    };
    Ok((
        Tok::Num {
            width: width.or(Some(32)),
            value,
        },
        j,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num {
        width: Option<u32>,
        value: u64,
    },
    Ident(String),
    Index(String, Box<Expr>),
    Range(String, i64, i64),
    /// `name[base +: width]` and `name[base -: width]`.
    IndexedRange {
        name: String,
        base: Box<Expr>,
        width: u32,
        up: bool,
    },
    Unary(&'static str, Box<Expr>),
    Binary(&'static str, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Concat(Vec<Expr>),
    Repeat(u32, Vec<Expr>),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LValue {
    Whole(String),
    Bit(String, Expr),
    Range(String, i64, i64),
    Concat(Vec<LValue>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Block(Vec<Stmt>),
    Assign(LValue, Expr),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    Case(Expr, Vec<(Vec<Expr>, Stmt)>, Option<Box<Stmt>>),
    For(Box<Stmt>, Expr, Box<Stmt>, Box<Stmt>),
    Delay(Box<Stmt>),
    Display(Vec<Expr>),
    Finish,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Input,
    Output,
    Wire,
    Reg,
    Integer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub kind: DeclKind,
    pub msb: i64,
    pub lsb: i64,
    /// Output declared `reg` as well.
    pub is_reg: bool,
}

impl Decl {
    pub fn width(&self) -> u32 {
        ((self.msb - self.lsb).unsigned_abs() + 1) as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub module: String,
    pub name: String,
    pub named: Vec<(String, Option<Expr>)>,
    pub positional: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Assign(LValue, Expr),
    Always(Stmt),
    Initial(Stmt),
    Instance(Instance),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub name: String,
    pub ports: Vec<String>,
    pub decls: BTreeMap<String, Decl>,
    pub params: BTreeMap<String, u64>,
    pub items: Vec<Item>,
}

impl Module {
    pub fn port_dir(&self, name: &str) -> Option<DeclKind> {
        self.decls
            .get(name)
            .map(|d| d.kind)
            .filter(|k| matches!(k, DeclKind::Input | DeclKind::Output))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    /// Parameters of the module being parsed.
    params: Params,
}

type Params = BTreeMap<String, u64>;

impl Parser {
    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or(self.toks.last())
            .map_or(0, |t| t.1)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.0)
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(err(self.line(), msg))
    }

    fn next(&mut self) -> Result<Tok> {
        let t = self.peek().cloned();
        match t {
            Some(t) => {
                self.pos += 1;
                Ok(t)
            }
            None => self.fail("unexpected end of input"),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(format!("expected `{s}`, found {:?}", self.peek()))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.fail(format!("expected `{k}`, found {:?}", self.peek()))
        }
    }

    fn range_bound(&self, e: &Expr) -> Result<i64> {
        const_eval(e, &self.params)
            .ok_or_else(|| err(self.line(), "part-select bounds must be constant"))
    }

    fn ident(&mut self) -> Result<String> {
        match self.next()? {
            Tok::Ident(s) if !is_keyword(&s) => Ok(s),
            t => {
                self.pos -= 1;
                self.fail(format!("expected identifier, found {t:?}"))
            }
        }
    }

    fn module(&mut self) -> Result<Module> {
        self.expect_kw("module")?;
        let name = self.ident()?;
        self.params.clear();
        let mut m = Module {
            name,
            ports: Vec::new(),
            decls: BTreeMap::new(),
            params: BTreeMap::new(),
            items: Vec::new(),
        };
        if self.eat_sym("#") {
            return self.fail("parameter port lists are not supported");
        }
        if self.eat_sym("(") && !self.eat_sym(")") {
            let mut dir: Option<DeclKind> = None;
            let mut range = (0, 0);
            let mut is_reg = false;
            loop {
                if let Some(k) = self.direction() {
                    dir = Some(k);
                    is_reg = false;
                    while self.eat_kw("wire") || self.eat_kw("signed") || self.eat_kw("logic") {}
                    if self.eat_kw("reg") {
                        is_reg = true;
                        self.eat_kw("signed");
                    }
                    range = self.opt_range(&m.params)?;
                }
                let p = self.ident()?;
                if let Some(kind) = dir {
                    declare(&mut m, &p, kind, range, is_reg).map_err(|e| err(self.line(), e))?;
                }
                m.ports.push(p);
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        self.expect_sym(";")?;
        while !self.eat_kw("endmodule") {
            if self.peek().is_none() {
                return self.fail("missing endmodule");
            }
            self.module_item(&mut m)?;
        }
        for p in &m.ports {
            if m.port_dir(p).is_none() {
                return self.fail(format!("port `{p}` has no direction"));
            }
        }
        Ok(m)
    }

    fn direction(&mut self) -> Option<DeclKind> {
        if self.eat_kw("input") {
            Some(DeclKind::Input)
        } else if self.eat_kw("output") {
            Some(DeclKind::Output)
        } else {
            None
        }
    }

    fn opt_range(&mut self, params: &Params) -> Result<(i64, i64)> {
        if !self.eat_sym("[") {
            return Ok((0, 0));
        }
        let msb = self.const_expr(params)?;
        self.expect_sym(":")?;
        let lsb = self.const_expr(params)?;
        self.expect_sym("]")?;
        if (msb - lsb).abs() >= 64 {
            return self.fail("vectors wider than 64 bits are not supported");
        }
        Ok((msb, lsb))
    }

    fn const_expr(&mut self, params: &Params) -> Result<i64> {
        let e = self.expr()?;
        const_eval(&e, params).ok_or_else(|| err(self.line(), "expected a constant expression"))
    }

    fn module_item(&mut self, m: &mut Module) -> Result<()> {
        if let Some(kind) = self.direction() {
            let mut is_reg = false;
            while self.eat_kw("wire") || self.eat_kw("signed") || self.eat_kw("logic") {}
            if self.eat_kw("reg") {
                is_reg = true;
                self.eat_kw("signed");
            }
            let range = self.opt_range(&m.params)?;
            loop {
                let n = self.ident()?;
                declare(m, &n, kind, range, is_reg).map_err(|e| err(self.line(), e))?;
                if !self.eat_sym(",") {
                    break;
                }
            }
            return self.expect_sym(";");
        }
        if self.is_kw("wire") || self.is_kw("reg") || self.is_kw("integer") || self.is_kw("logic") {
            let kind = match self.next()? {
                Tok::Ident(k) if k == "wire" => DeclKind::Wire,
                Tok::Ident(k) if k == "integer" => DeclKind::Integer,
                _ => DeclKind::Reg,
            };
            self.eat_kw("signed");
            let range = if kind == DeclKind::Integer {
                (31, 0)
            } else {
                self.opt_range(&m.params)?
            };
            loop {
                let n = self.ident()?;
                declare(m, &n, kind, range, kind == DeclKind::Reg)
                    .map_err(|e| err(self.line(), e))?;
                if self.eat_sym("=") {
                    let e = self.expr()?;
                    m.items.push(Item::Assign(LValue::Whole(n), e));
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
            return self.expect_sym(";");
        }
        if self.eat_kw("parameter") || self.eat_kw("localparam") {
            self.eat_kw("integer");
            let _ = self.opt_range(&m.params)?;
            loop {
                let n = self.ident()?;
                self.expect_sym("=")?;
                let v = self.const_expr(&m.params)?;
                m.params.insert(n.clone(), v as u64);
                self.params.insert(n, v as u64);
                if !self.eat_sym(",") {
                    break;
                }
            }
            return self.expect_sym(";");
        }
        if self.eat_kw("assign") {
            loop {
                let l = self.lvalue()?;
                self.expect_sym("=")?;
                let e = self.expr()?;
                m.items.push(Item::Assign(l, e));
                if !self.eat_sym(",") {
                    break;
                }
            }
            return self.expect_sym(";");
        }
        if self.eat_kw("always") || self.eat_kw("always_comb") {
            if self.eat_sym("@") {
                if self.eat_sym("*") {
                } else {
                    self.expect_sym("(")?;
                    let mut depth = 1;
                    while depth > 0 {
                        match self.next()? {
                            Tok::Sym("(") => depth += 1,
                            Tok::Sym(")") => depth -= 1,
                            Tok::Ident(k) if k == "posedge" || k == "negedge" => {
                                return self.fail("edge-triggered always blocks are not supported");
                            }
                            _ => {}
                        }
                    }
                }
            }
            let s = self.stmt()?;
            m.items.push(Item::Always(s));
            return Ok(());
        }
        if self.eat_kw("initial") {
            let s = self.stmt()?;
            m.items.push(Item::Initial(s));
            return Ok(());
        }
        if let (Some(Tok::Ident(_)), Some(Tok::Ident(_))) = (self.peek(), self.peek_at(1)) {
            return self.instance(m);
        }
        self.fail(format!("unexpected {:?} in module body", self.peek()))
    }

    fn instance(&mut self, m: &mut Module) -> Result<()> {
        let module = self.ident()?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut inst = Instance {
            module,
            name,
            named: Vec::new(),
            positional: Vec::new(),
        };
        if !self.eat_sym(")") {
            loop {
                if self.eat_sym(".") {
                    let port = self.ident()?;
                    self.expect_sym("(")?;
                    let e = if self.is_sym(")") {
                        None
                    } else {
                        Some(self.expr()?)
                    };
                    self.expect_sym(")")?;
                    inst.named.push((port, e));
                } else {
                    inst.positional.push(self.expr()?);
                }
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        self.expect_sym(";")?;
        if !inst.named.is_empty() && !inst.positional.is_empty() {
            return self.fail("mixed named and positional connections");
        }
        m.items.push(Item::Instance(inst));
        Ok(())
    }

    fn lvalue(&mut self) -> Result<LValue> {
        if self.eat_sym("{") {
            let mut parts = vec![self.lvalue()?];
            while self.eat_sym(",") {
                parts.push(self.lvalue()?);
            }
            self.expect_sym("}")?;
            return Ok(LValue::Concat(parts));
        }
        let n = self.ident()?;
        if self.eat_sym("[") {
            let a = self.expr()?;
            if self.eat_sym(":") {
                let b = self.expr()?;
                self.expect_sym("]")?;
                let (Some(msb), Some(lsb)) =
                    (const_eval(&a, &self.params), const_eval(&b, &self.params))
                else {
                    return self.fail("part-select bounds must be constant");
                };
                return Ok(LValue::Range(n, msb, lsb));
            }
            self.expect_sym("]")?;
            return Ok(LValue::Bit(n, a));
        }
        Ok(LValue::Whole(n))
    }

    fn stmt(&mut self) -> Result<Stmt> {
        if self.eat_sym(";") {
            return Ok(Stmt::Empty);
        }
        if self.eat_kw("begin") {
            if self.eat_sym(":") {
                self.ident()?;
            }
            let mut v = Vec::new();
            while !self.eat_kw("end") {
                if self.peek().is_none() {
                    return self.fail("missing end");
                }
                v.push(self.stmt()?);
            }
            return Ok(Stmt::Block(v));
        }
        if self.eat_kw("if") {
            self.expect_sym("(")?;
            let c = self.expr()?;
            self.expect_sym(")")?;
            let t = self.stmt()?;
            let e = if self.eat_kw("else") {
                Some(Box::new(self.stmt()?))
            } else {
                None
            };
            return Ok(Stmt::If(c, Box::new(t), e));
        }
        if self.eat_kw("case") || self.eat_kw("casez") || self.eat_kw("casex") {
            self.expect_sym("(")?;
            let sel = self.expr()?;
            self.expect_sym(")")?;
            let mut arms = Vec::new();
            let mut default = None;
            while !self.eat_kw("endcase") {
                if self.eat_kw("default") {
                    self.eat_sym(":");
                    default = Some(Box::new(self.stmt()?));
                    continue;
                }
                let mut labels = vec![self.expr()?];
                while self.eat_sym(",") {
                    labels.push(self.expr()?);
                }
                self.expect_sym(":")?;
                arms.push((labels, self.stmt()?));
            }
            return Ok(Stmt::Case(sel, arms, default));
        }
        if self.eat_kw("for") {
            self.expect_sym("(")?;
            let init = self.assignment()?;
            self.expect_sym(";")?;
            let cond = self.expr()?;
            self.expect_sym(";")?;
            let step = self.assignment()?;
            self.expect_sym(")")?;
            let body = self.stmt()?;
            return Ok(Stmt::For(
                Box::new(init),
                cond,
                Box::new(step),
                Box::new(body),
            ));
        }
        if self.eat_sym("#") {
            match self.next()? {
                Tok::Num { .. } | Tok::Ident(_) => {}
                t => return self.fail(format!("bad delay {t:?}")),
            }
            return Ok(Stmt::Delay(Box::new(self.stmt()?)));
        }
        if let Some(Tok::Sys(name)) = self.peek().cloned() {
            self.pos += 1;
            let mut args = Vec::new();
            if self.eat_sym("(") && !self.eat_sym(")") {
                loop {
                    args.push(self.expr()?);
                    if self.eat_sym(")") {
                        break;
                    }
                    self.expect_sym(",")?;
                }
            }
            self.expect_sym(";")?;
            return match name.as_str() {
                "$display" | "$write" => Ok(Stmt::Display(args)),
                "$finish" | "$stop" => Ok(Stmt::Finish),
                "$dumpfile" | "$dumpvars" | "$monitor" => Ok(Stmt::Empty),
                other => self.fail(format!("unsupported system task {other}")),
            };
        }
        let s = self.assignment()?;
        self.expect_sym(";")?;
        Ok(s)
    }

    fn assignment(&mut self) -> Result<Stmt> {
        let l = self.lvalue()?;
        if !self.eat_sym("=") && !self.eat_sym("<=") {
            return self.fail("expected `=`");
        }
        Ok(Stmt::Assign(l, self.expr()?))
    }

    fn expr(&mut self) -> Result<Expr> {
        let c = self.binary(0)?;
        if self.eat_sym("?") {
            let t = self.expr()?;
            self.expect_sym(":")?;
            let f = self.expr()?;
            return Ok(Expr::Ternary(Box::new(c), Box::new(t), Box::new(f)));
        }
        Ok(c)
    }

    fn binary(&mut self, level: usize) -> Result<Expr> {
        const LEVELS: [&[&str]; 10] = [
            &["||"],
            &["&&"],
            &["|"],
            &["^", "~^", "^~"],
            &["&"],
            &["==", "!=", "===", "!=="],
            &["<", "<=", ">", ">="],
            &["<<", ">>", "<<<", ">>>"],
            &["+", "-"],
            &["*", "/", "%"],
        ];
        if level == LEVELS.len() {
            return self.power();
        }
        let mut l = self.binary(level + 1)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym(s)) if LEVELS[level].contains(s) => *s,
                _ => return Ok(l),
            };
            self.pos += 1;
            let r = self.binary(level + 1)?;
            l = Expr::Binary(op, Box::new(l), Box::new(r));
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let l = self.unary()?;
        if self.eat_sym("**") {
            let r = self.power()?;
            return Ok(Expr::Binary("**", Box::new(l), Box::new(r)));
        }
        Ok(l)
    }

    fn unary(&mut self) -> Result<Expr> {
        for op in ["~&", "~|", "~^", "^~", "!", "~", "-", "+", "&", "|", "^"] {
            if self.eat_sym(op) {
                let e = self.unary()?;
                let op: &'static str = SYMBOLS.iter().find(|s| **s == op).unwrap();
                return Ok(Expr::Unary(op, Box::new(e)));
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.next()? {
            Tok::Num { width, value } => Ok(Expr::Num { width, value }),
            Tok::Str(s) => Ok(Expr::Str(s)),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("{") => {
                let first = self.expr()?;
                if self.eat_sym("{") {
                    let n = const_eval(&first, &self.params)
                        .filter(|n| *n >= 0)
                        .ok_or_else(|| err(self.line(), "replication count must be constant"))?;
                    let mut parts = vec![self.expr()?];
                    while self.eat_sym(",") {
                        parts.push(self.expr()?);
                    }
                    self.expect_sym("}")?;
                    self.expect_sym("}")?;
                    return Ok(Expr::Repeat(n as u32, parts));
                }
                let mut parts = vec![first];
                while self.eat_sym(",") {
                    parts.push(self.expr()?);
                }
                self.expect_sym("}")?;
                Ok(Expr::Concat(parts))
            }
            Tok::Ident(n) if !is_keyword(&n) => {
                if self.eat_sym("[") {
                    let a = self.expr()?;
                    if self.eat_sym(":") {
                        let b = self.expr()?;
                        self.expect_sym("]")?;
                        return Ok(Expr::Range(n, self.range_bound(&a)?, self.range_bound(&b)?));
                    }
                    for (sym, up) in [("+:", true), ("-:", false)] {
                        if self.eat_sym(sym) {
                            let w = self.expr()?;
                            self.expect_sym("]")?;
                            let width = const_eval(&w, &self.params)
                                .filter(|w| (1..=64).contains(w))
                                .ok_or_else(|| {
                                    err(self.line(), "indexed part-select width must be constant")
                                })?;
                            return Ok(Expr::IndexedRange {
                                name: n,
                                base: Box::new(a),
                                width: width as u32,
                                up,
                            });
                        }
                    }
                    self.expect_sym("]")?;
                    return Ok(Expr::Index(n, Box::new(a)));
                }
                Ok(Expr::Ident(n))
            }
            t => {
                self.pos -= 1;
                self.fail(format!("unexpected {t:?} in expression"))
            }
        }
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "module"
            | "endmodule"
            | "input"
            | "output"
            | "wire"
            | "reg"
            | "integer"
            | "assign"
            | "always"
            | "initial"
            | "begin"
            | "end"
            | "if"
            | "else"
            | "case"
            | "endcase"
            | "default"
            | "for"
            | "parameter"
            | "localparam"
    )
}

fn declare(
    m: &mut Module,
    name: &str,
    kind: DeclKind,
    (msb, lsb): (i64, i64),
    is_reg: bool,
) -> std::result::Result<(), String> {
    match m.decls.get_mut(name) {
        None => {
            m.decls.insert(
                name.to_string(),
                Decl {
                    kind,
                    msb,
                    lsb,
                    is_reg,
                },
            );
            Ok(())
        }
        // `output [3:0] y; reg [3:0] y;`
        Some(d)
            if matches!(d.kind, DeclKind::Input | DeclKind::Output)
                && matches!(kind, DeclKind::Wire | DeclKind::Reg) =>
        {
            if (d.msb, d.lsb) != (msb, lsb) && (msb, lsb) != (0, 0) {
                return Err(format!("`{name}` redeclared with a different range"));
            }
            d.is_reg |= kind == DeclKind::Reg;
            Ok(())
        }
        Some(_) => Err(format!("`{name}` declared twice")),
    }
}

/// Constant folding for ranges and parameters.
pub fn const_eval(e: &Expr, params: &Params) -> Option<i64> {
    Some(match e {
        Expr::Num { value, .. } => *value as i64,
        Expr::Ident(n) => *params.get(n)? as i64,
        Expr::Unary("-", a) => -const_eval(a, params)?,
        Expr::Unary("+", a) => const_eval(a, params)?,
        Expr::Binary(op, a, b) => {
            let (a, b) = (const_eval(a, params)?, const_eval(b, params)?);
            match *op {
                "+" => a.checked_add(b)?,
                "-" => a.checked_sub(b)?,
                "*" => a.checked_mul(b)?,
                "/" => a.checked_div(b)?,
                "%" => a.checked_rem(b)?,
                "<<" => a.checked_shl(u32::try_from(b).ok()?)?,
                ">>" => a.checked_shr(u32::try_from(b).ok()?)?,
                "**" => a.checked_pow(u32::try_from(b).ok()?)?,
                _ => return None,
            }
        }
        _ => return None,
    })
}

/// Parses every module in `src`.
pub fn parse_modules(src: &str) -> Result<Vec<Module>> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        params: Params::new(),
    };
    let mut out = Vec::new();
    while p.peek().is_some() {
        let m = p.module()?;
        if out.iter().any(|o: &Module| o.name == m.name) {
            return Err(EvalError::Rtl(format!("module `{}` defined twice", m.name)));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(EvalError::Rtl("no module found".into()));
    }
    Ok(out)
}
