// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write;

use crate::netlist::{Decl, Gate, Netlist};

fn decl_text(kw: &str, d: &Decl) -> String {
    match d.range {
        None => format!("  {kw} {};\n", d.name),
        Some(r) => format!("  {kw} {r} {};\n", d.name),
    }
}

/// One instance statement, without indentation or trailing newline.
pub fn gate_line(g: &Gate) -> String {
    let pins: Vec<String> = g
        .pin_map
        .iter()
        .map(|(pin, sig)| format!(".{pin}({sig})"))
        .collect();
    format!("{} {} ({});", g.cell_type, g.instance_name, pins.join(", "))
}

/// Canonical non-ANSI rendering: one declaration per line, one instance per
/// line, pins in sorted order.
pub fn emit_verilog(n: &Netlist) -> String {
    let mut out = String::new();
    let names: Vec<&str> = n.ports.iter().map(|p| p.name()).collect();
    writeln!(out, "module {} ({});", n.name, names.join(", ")).unwrap();
    for p in &n.ports {
        out.push_str(&decl_text(&p.direction.to_string(), &p.decl));
    }
    for w in &n.wires {
        out.push_str(&decl_text("wire", w));
    }
    for g in &n.gates {
        writeln!(out, "  {}", gate_line(g)).unwrap();
    }
    out.push_str("endmodule\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::CellLibrary;
    use crate::parse::parse_netlist;

    #[test]
    fn canonical_text() {
        let lib = CellLibrary::builtin();
        let n = parse_netlist(
            "module m(input a,b, output y); AND2 g1(.Y(y),.B(b),.A(a)); endmodule",
            &lib,
        )
        .unwrap();
        let text = emit_verilog(&n);
        assert_eq!(
            text,
            "module m (a, b, y);\n  input a;\n  input b;\n  output y;\n  AND2 g1 (.A(a), .B(b), .Y(y));\nendmodule\n"
        );
        let again = parse_netlist(&text, &lib).unwrap();
        assert!(again.structure_eq(&n));
        assert_eq!(emit_verilog(&again), text);
    }
}
