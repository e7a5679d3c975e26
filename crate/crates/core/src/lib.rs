// SPDX-License-Identifier: Apache-2.0

//! Gate-level netlist core: cell libraries, a structural Verilog reader and
//! writer, symbolic gate expressions, text-attributed graphs and
//! register-bounded subcircuit splitting.

pub mod builder;
pub mod emit;
pub mod error;
pub mod expr;
pub mod graph;
pub mod library;
pub mod netlist;
pub mod parse;
pub mod random;
pub mod sim;
pub mod split;

pub use builder::NetlistBuilder;
pub use emit::emit_verilog;
pub use error::{NetlistError, Result};
pub use expr::{truth_table, BoolExpr, TruthTable};
pub use graph::{build_tag_graph, Node, NodeKind, TaGraph};
pub use library::{CellDef, CellLibrary};
pub use netlist::{derive_gate_expr, extract_io_signals, Direction, Gate, Netlist, Port, Signal};
pub use parse::parse_netlist;
pub use sim::{simulate, simulate_words};
pub use split::split_subcircuits;

/// Removes `//` line comments and `/* */` block comments, keeping line breaks.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '/' && chars.peek() == Some(&'/') {
            for c in chars.by_ref() {
                if c == '\n' {
                    out.push('\n');
                    break;
                }
            }
        } else if c == '/' && chars.peek() == Some(&'*') {
            chars.next();
            let mut prev = ' ';
            for c in chars.by_ref() {
                if c == '\n' {
                    out.push('\n');
                }
                if prev == '*' && c == '/' {
                    break;
                }
                prev = c;
            }
        } else {
            out.push(c);
        }
    }
    out
}
