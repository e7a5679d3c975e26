// SPDX-License-Identifier: Apache-2.0

//! Text-attributed graphs built from netlists.
//!
//! Node order is fixed: input port bits, then gate/register instances in
//! netlist order, then output port bits. Registers are boundary nodes: edges
//! entering a register are kept (so connectivity matches the netlist) but
//! are not combinational, which is what makes sequential loops acyclic.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use crate::error::{NetlistError, Result};
use crate::expr::BoolExpr;
use crate::library::CellLibrary;
use crate::netlist::{derive_gate_expr, Driver, Netlist, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    PrimaryInput,
    Gate,
    Register,
    PrimaryOutput,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::PrimaryInput => "input",
            NodeKind::Gate => "gate",
            NodeKind::Register => "register",
            NodeKind::PrimaryOutput => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub expr: BoolExpr,
    /// Library cell name, or `INPUT`/`OUTPUT` for port bits.
    pub cell_type: String,
    /// Instance name, or the port bit name.
    pub name: String,
    /// Index into `Netlist::gates` for gate and register nodes.
    pub gate_index: Option<usize>,
}

impl Node {
    /// Text attribute: cell type and instance name.
    pub fn text(&self) -> String {
        format!("{} {}", self.cell_type, self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaGraph {
    pub nodes: Vec<Node>,
    /// Directed driver → sink pairs, sorted and unique.
    pub edges: Vec<(usize, usize)>,
}

impl TaGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Edges whose sink is not a register.
    pub fn combinational_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .copied()
            .filter(move |&(_, d)| self.nodes[d].kind != NodeKind::Register)
    }

    /// Gate nodes in netlist order.
    pub fn gate_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Gate)
    }

    /// Topological order of the combinational edge relation.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, d) in self.combinational_edges() {
            indeg[d] += 1;
            succ[s].push(d);
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &d in &succ[v] {
                indeg[d] -= 1;
                if indeg[d] == 0 {
                    ready.insert(d);
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        Err(NetlistError::CombinationalLoop(
            self.find_cycle(&succ, &indeg),
        ))
    }

    fn find_cycle(&self, succ: &[Vec<usize>], indeg: &[usize]) -> Vec<String> {
        // Every node left with indeg > 0 lies on or downstream of a cycle; walk
        // predecessors among them until a node repeats.
        let mut pred: HashMap<usize, usize> = HashMap::new();
        for (s, list) in succ.iter().enumerate() {
            for &d in list {
                if indeg[s] > 0 && indeg[d] > 0 {
                    pred.entry(d).or_insert(s);
                }
            }
        }
        let start = (0..indeg.len())
            .find(|&i| indeg[i] > 0 && pred.contains_key(&i))
            .unwrap_or(0);
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let mut walk = Vec::new();
        let mut v = start;
        while !seen.contains_key(&v) {
            seen.insert(v, walk.len());
            walk.push(v);
            v = pred[&v];
        }
        let mut cycle: Vec<usize> = walk[seen[&v]..].to_vec();
        cycle.reverse();
        let first = cycle
            .iter()
            .enumerate()
            .min_by_key(|(_, &id)| &self.nodes[id].name)
            .map_or(0, |(i, _)| i);
        cycle.rotate_left(first);
        let mut names: Vec<String> = cycle.iter().map(|&i| self.nodes[i].name.clone()).collect();
        names.push(names[0].clone());
        names
    }

    /// Adjacency lists: (in-neighbours, out-neighbours) per node.
    pub fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut ins = vec![Vec::new(); self.nodes.len()];
        let mut outs = vec![Vec::new(); self.nodes.len()];
        for &(s, d) in &self.edges {
            outs[s].push(d);
            ins[d].push(s);
        }
        (ins, outs)
    }

    /// Renumbers nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> TaGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = self.nodes.clone();
        for n in nodes.iter_mut() {
            n.id = perm[n.id];
        }
        nodes.sort_by_key(|n| n.id);
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(s, d)| (perm[s], perm[d]))
            .collect();
        edges.sort_unstable();
        TaGraph { nodes, edges }
    }

    /// Debug dump: `node_id kind cell expr` lines, then `src dst` lines.
    pub fn dump(&self) -> String {
        let mut out = String::from("# nodes\n");
        for n in &self.nodes {
            writeln!(
                out,
                "{} {} {} {}",
                n.id,
                n.kind.as_str(),
                n.cell_type,
                n.expr
            )
            .unwrap();
        }
        out.push_str("# edges\n");
        for (s, d) in &self.edges {
            writeln!(out, "{s} {d}").unwrap();
        }
        out
    }
}

/// Builds the text-attributed graph of a validated netlist.
pub fn build_tag_graph(n: &Netlist, lib: &CellLibrary) -> Result<TaGraph> {
    let mut nodes = Vec::new();
    let mut push = |kind, expr, cell_type: &str, name: &str, gate_index| {
        let id = nodes.len();
        nodes.push(Node {
            id,
            kind,
            expr,
            cell_type: cell_type.to_string(),
            name: name.to_string(),
            gate_index,
        });
        id
    };

    let mut input_node: HashMap<String, usize> = HashMap::new();
    for bit in n.input_bits() {
        let id = push(
            NodeKind::PrimaryInput,
            BoolExpr::Var(bit.clone()),
            "INPUT",
            &bit,
            None,
        );
        input_node.insert(bit, id);
    }
    let mut gate_node = Vec::with_capacity(n.gates.len());
    for (gi, g) in n.gates.iter().enumerate() {
        let cell = lib.cell(&g.cell_type)?;
        let id = match &cell.sequential {
            Some(seq) => {
                let expr = match &g.pin_map[&seq.data] {
                    Signal::Net(d) => BoolExpr::Var(d.clone()),
                    Signal::Const(b) => BoolExpr::Const(*b),
                };
                push(
                    NodeKind::Register,
                    expr,
                    &g.cell_type,
                    &g.instance_name,
                    Some(gi),
                )
            }
            None => push(
                NodeKind::Gate,
                derive_gate_expr(g, lib)?,
                &g.cell_type,
                &g.instance_name,
                Some(gi),
            ),
        };
        gate_node.push(id);
    }
    let mut po_nodes = Vec::new();
    for bit in n.output_bits() {
        let id = push(
            NodeKind::PrimaryOutput,
            BoolExpr::Var(bit.clone()),
            "OUTPUT",
            &bit,
            None,
        );
        po_nodes.push((bit, id));
    }

    let drivers = n.drivers(lib);
    let driver_node = |net: &str| -> Option<usize> {
        match drivers.get(net)? {
            Driver::Input => input_node.get(net).copied(),
            Driver::Gate(gi) => Some(gate_node[*gi]),
        }
    };
    let mut edges = BTreeSet::new();
    for (gi, g) in n.gates.iter().enumerate() {
        let cell = lib.cell(&g.cell_type)?;
        for formal in &cell.inputs {
            if let Some(net) = g.pin_map[formal].net() {
                if let Some(src) = driver_node(net) {
                    edges.insert((src, gate_node[gi]));
                }
            }
        }
    }
    for (bit, id) in &po_nodes {
        if let Some(src) = driver_node(bit) {
            edges.insert((src, *id));
        }
    }
    let g = TaGraph {
        nodes,
        edges: edges.into_iter().collect(),
    };
    g.topological_order()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_netlist;

    #[test]
    fn and_module_graph() {
        let lib = CellLibrary::builtin();
        let n = parse_netlist(
            "module m(input a,b, output y); AND2 g1(.A(a),.B(b),.Y(y)); endmodule",
            &lib,
        )
        .unwrap();
        let g = build_tag_graph(&n, &lib).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.edges, vec![(0, 2), (1, 2), (2, 3)]);
        assert_eq!(g.nodes[2].text(), "AND2 g1");
        assert_eq!(
            g.dump(),
            "# nodes\n0 input INPUT a\n1 input INPUT b\n2 gate AND2 AND(a,b)\n3 output OUTPUT y\n# edges\n0 2\n1 2\n2 3\n"
        );
    }

    #[test]
    fn register_feedback_is_cut() {
        let lib = CellLibrary::builtin();
        let text = "module t(input clk, output q); wire d;\n\
                    DFF r1(.CLK(clk), .D(d), .Q(q));\n\
                    INV g1(.A(q), .Y(d));\nendmodule";
        let n = parse_netlist(text, &lib).unwrap();
        let g = build_tag_graph(&n, &lib).unwrap();
        assert_eq!(g.count(NodeKind::Register), 1);
        assert_eq!(g.len(), 4);
        // clk->r1, g1->r1, r1->g1, r1->q
        assert_eq!(g.edges.len(), 4);
        assert!(g.topological_order().is_ok());
    }

    #[test]
    fn combinational_loop_rejected() {
        let lib = CellLibrary::builtin();
        let text = "module t(input a, output y); wire x;\n\
                    AND2 g1(.A(a), .B(y), .Y(x));\n\
                    INV g2(.A(x), .Y(y));\nendmodule";
        let n = parse_netlist(text, &lib).unwrap();
        let err = build_tag_graph(&n, &lib).unwrap_err();
        assert_eq!(
            err,
            NetlistError::CombinationalLoop(vec!["g1".into(), "g2".into(), "g1".into()])
        );
    }

    #[test]
    fn permutation_preserves_structure() {
        let lib = CellLibrary::builtin();
        let n = parse_netlist(
            "module m(input a,b, output y); AND2 g1(.A(a),.B(b),.Y(y)); endmodule",
            &lib,
        )
        .unwrap();
        let g = build_tag_graph(&n, &lib).unwrap();
        let p = g.permuted(&[3, 1, 0, 2]);
        assert_eq!(p.nodes[0].name, "g1");
        assert_eq!(p.edges, vec![(0, 2), (1, 0), (3, 0)]);
    }
}
