// SPDX-License-Identifier: Apache-2.0

//! Structural Verilog reader.
//!
//! Accepts one module with ANSI or non-ANSI port lists, `input`/`output`/
//! `wire` declarations (optionally ranged) and cell instances with named
//! port connections. Pins may connect to scalar nets, single vector bits or
//! the constants `1'b0`/`1'b1`. Line and block comments are skipped.

use std::collections::{BTreeMap, HashMap};

use crate::error::{NetlistError, Result};
use crate::library::CellLibrary;
use crate::netlist::{bit_name, BitRange, Decl, Direction, Gate, Netlist, Port, Signal};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(i64),
    Const(bool),
    Punct(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> NetlistError {
    NetlistError::SyntaxError {
        line,
        col,
        msg: msg.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let (sl, sc) = (line, col);
            advance(&mut i, &mut line, &mut col, '/');
            advance(&mut i, &mut line, &mut col, '*');
            loop {
                if i >= chars.len() {
                    return Err(syntax(sl, sc, "unterminated block comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance(&mut i, &mut line, &mut col, '*');
                    advance(&mut i, &mut line, &mut col, '/');
                    break;
                }
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$')
            {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            let digits: String = chars[start..i].iter().collect();
            if chars.get(i) == Some(&'\'') {
                // sized literal; only single-bit binary constants are meaningful on a pin
                advance(&mut i, &mut line, &mut col, '\'');
                let base = chars.get(i).copied().unwrap_or(' ').to_ascii_lowercase();
                if base != 'b' || digits != "1" {
                    return Err(syntax(tl, tc, "only 1'b0 and 1'b1 constants are supported"));
                }
                advance(&mut i, &mut line, &mut col, base);
                let bit = chars.get(i).copied();
                match bit {
                    Some('0') | Some('1') => {
                        advance(&mut i, &mut line, &mut col, bit.unwrap());
                        out.push(Token {
                            tok: Tok::Const(bit == Some('1')),
                            line: tl,
                            col: tc,
                        });
                    }
                    _ => return Err(syntax(tl, tc, "malformed constant")),
                }
                continue;
            }
            let value = digits
                .parse::<i64>()
                .map_err(|_| syntax(tl, tc, "integer out of range"))?;
            out.push(Token {
                tok: Tok::Number(value),
                line: tl,
                col: tc,
            });
            continue;
        }
        if "()[]:;,.".contains(c) {
            advance(&mut i, &mut line, &mut col, c);
            out.push(Token {
                tok: Tok::Punct(c),
                line: tl,
                col: tc,
            });
            continue;
        }
        return Err(syntax(tl, tc, format!("unexpected character `{c}`")));
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "module",
    "endmodule",
    "input",
    "output",
    "inout",
    "wire",
    "assign",
    "reg",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> NetlistError {
        let t = self.peek();
        syntax(t.line, t.col, msg)
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek().tok == Tok::Punct(c)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn expect_punct(&mut self, c: char) -> Result<()> {
        if self.is_punct(c) {
            self.next();
            Ok(())
        } else {
            Err(self.err_here(format!("expected `{c}`")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.is_kw(kw) {
            self.next();
            Ok(())
        } else {
            Err(self.err_here(format!("expected `{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.err_here("expected identifier")),
        }
    }

    fn number(&mut self) -> Result<i64> {
        match self.peek().tok {
            Tok::Number(v) => {
                self.next();
                Ok(v)
            }
            _ => Err(self.err_here("expected integer")),
        }
    }

    fn opt_range(&mut self) -> Result<Option<BitRange>> {
        if !self.is_punct('[') {
            return Ok(None);
        }
        self.next();
        let msb = self.number()?;
        self.expect_punct(':')?;
        let lsb = self.number()?;
        self.expect_punct(']')?;
        Ok(Some(BitRange::new(msb, lsb)))
    }

    fn direction(&mut self) -> Result<Option<Direction>> {
        if self.is_kw("input") {
            self.next();
            Ok(Some(Direction::Input))
        } else if self.is_kw("output") {
            self.next();
            Ok(Some(Direction::Output))
        } else if self.is_kw("inout") {
            Err(self.err_here("inout ports are not supported"))
        } else {
            Ok(None)
        }
    }
}

/// Parses structural Verilog and validates it against `lib`.
pub fn parse_netlist(text: &str, lib: &CellLibrary) -> Result<Netlist> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    p.expect_kw("module")?;
    let name = p.ident()?;

    // Header: either ANSI declarations or a bare name list.
    let mut ports: Vec<Port> = Vec::new();
    let mut header_names: Vec<(String, usize, usize)> = Vec::new();
    let mut ansi = false;
    if p.is_punct('(') {
        p.next();
        if !p.is_punct(')') {
            if p.is_kw("input") || p.is_kw("output") || p.is_kw("inout") {
                ansi = true;
                let mut dir = Direction::Input;
                let mut range = None;
                loop {
                    if let Some(d) = p.direction()? {
                        dir = d;
                        if p.is_kw("wire") {
                            p.next();
                        }
                        range = p.opt_range()?;
                    }
                    let n = p.ident()?;
                    ports.push(Port {
                        decl: Decl { name: n, range },
                        direction: dir,
                    });
                    if p.is_punct(',') {
                        p.next();
                        continue;
                    }
                    break;
                }
            } else {
                loop {
                    let t = p.peek().clone();
                    header_names.push((p.ident()?, t.line, t.col));
                    if p.is_punct(',') {
                        p.next();
                        continue;
                    }
                    break;
                }
            }
        }
        p.expect_punct(')')?;
    }
    p.expect_punct(';')?;

    let mut declared_dirs: HashMap<String, (Direction, Option<BitRange>)> = HashMap::new();
    let mut wires: Vec<Decl> = Vec::new();
    let mut gates: Vec<Gate> = Vec::new();

    loop {
        let t = p.peek().clone();
        match &t.tok {
            Tok::Eof => return Err(syntax(t.line, t.col, "missing `endmodule`")),
            Tok::Ident(kw) if kw == "endmodule" => {
                p.next();
                break;
            }
            Tok::Ident(kw) if kw == "input" || kw == "output" || kw == "inout" => {
                if ansi {
                    return Err(syntax(
                        t.line,
                        t.col,
                        "port redeclared in body of ANSI module",
                    ));
                }
                let dir = p.direction()?.expect("checked keyword");
                if p.is_kw("wire") {
                    p.next();
                }
                let range = p.opt_range()?;
                loop {
                    let n = p.ident()?;
                    if declared_dirs.insert(n.clone(), (dir, range)).is_some() {
                        return Err(NetlistError::DuplicateDeclaration(n));
                    }
                    if !p.is_punct(',') {
                        break;
                    }
                    p.next();
                }
                p.expect_punct(';')?;
            }
            Tok::Ident(kw) if kw == "wire" => {
                p.next();
                let range = p.opt_range()?;
                loop {
                    let n = p.ident()?;
                    wires.push(Decl { name: n, range });
                    if !p.is_punct(',') {
                        break;
                    }
                    p.next();
                }
                p.expect_punct(';')?;
            }
            Tok::Ident(kw) if kw == "assign" || kw == "reg" => {
                return Err(syntax(
                    t.line,
                    t.col,
                    format!("`{kw}` is not structural netlist syntax"),
                ));
            }
            Tok::Ident(_) => gates.push(parse_instance(&mut p)?),
            _ => {
                return Err(syntax(
                    t.line,
                    t.col,
                    "expected declaration or cell instance",
                ))
            }
        }
    }
    if p.peek().tok != Tok::Eof {
        return Err(p.err_here("trailing tokens after `endmodule`"));
    }

    if !ansi {
        for (n, line, col) in &header_names {
            let (dir, range) = declared_dirs.remove(n).ok_or_else(|| {
                syntax(
                    *line,
                    *col,
                    format!("port `{n}` has no direction declaration"),
                )
            })?;
            ports.push(Port {
                decl: Decl {
                    name: n.clone(),
                    range,
                },
                direction: dir,
            });
        }
        if let Some(n) = declared_dirs.keys().min() {
            return Err(NetlistError::UndeclaredNet(n.clone()));
        }
    }
    // `output y; wire y;` redeclares a port as a net; keep only the port.
    wires.retain(|w| !ports.iter().any(|p| p.decl == *w));

    let netlist = Netlist {
        name,
        ports,
        wires,
        gates,
        source_text: text.to_string(),
    };
    resolve_vector_refs(&netlist)?;
    netlist.validate(lib)?;
    Ok(netlist)
}

fn parse_instance(p: &mut Parser) -> Result<Gate> {
    let cell_type = p.ident()?;
    let instance_name = p.ident()?;
    p.expect_punct('(')?;
    let mut pin_map = BTreeMap::new();
    if !p.is_punct(')') {
        loop {
            if !p.is_punct('.') {
                return Err(p.err_here("expected named port connection `.PIN(net)`"));
            }
            p.next();
            let pin = p.ident()?;
            p.expect_punct('(')?;
            let sig = match p.peek().tok.clone() {
                Tok::Const(b) => {
                    p.next();
                    Signal::Const(b)
                }
                Tok::Ident(_) => {
                    let base = p.ident()?;
                    if p.is_punct('[') {
                        p.next();
                        let idx = p.number()?;
                        p.expect_punct(']')?;
                        Signal::Net(bit_name(&base, idx))
                    } else {
                        Signal::Net(base)
                    }
                }
                _ => return Err(p.err_here("expected net or constant")),
            };
            p.expect_punct(')')?;
            if pin_map.insert(pin.clone(), sig).is_some() {
                return Err(NetlistError::PinMismatch {
                    instance: instance_name,
                    detail: format!("pin {pin} connected twice"),
                });
            }
            if p.is_punct(',') {
                p.next();
                continue;
            }
            break;
        }
    }
    p.expect_punct(')')?;
    p.expect_punct(';')?;
    Ok(Gate {
        instance_name,
        cell_type,
        pin_map,
    })
}

/// Rejects whole-vector references on single-bit pins.
fn resolve_vector_refs(n: &Netlist) -> Result<()> {
    let vectors: HashMap<&str, ()> = n
        .ports
        .iter()
        .map(|p| &p.decl)
        .chain(n.wires.iter())
        .filter(|d| d.range.is_some())
        .map(|d| (d.name.as_str(), ()))
        .collect();
    for g in &n.gates {
        for sig in g.pin_map.values() {
            if let Signal::Net(s) = sig {
                if vectors.contains_key(s.as_str()) {
                    return Err(NetlistError::UndeclaredNet(s.clone()));
                }
            }
        }
    }
    Ok(())
}
