// SPDX-License-Identifier: Apache-2.0

//! Oracles shared by the property tests and the workspace acceptance suite.

use std::collections::{HashMap, HashSet};

use netreason_core::CellLibrary;
use regex::Regex;

/// Independent node/edge counter working on canonical text with regexes.
pub fn scan_counts(text: &str, lib: &CellLibrary) -> (usize, usize) {
    let decl = Regex::new(r"^\s*(input|output)\s*(?:\[(\d+):(\d+)\])?\s*(\w+);").unwrap();
    let inst = Regex::new(r"^\s*(\w+)\s+(\w+)\s*\((.*)\);").unwrap();
    let pin = Regex::new(r"\.(\w+)\(([^)]*)\)").unwrap();
    let mut pis = Vec::new();
    let mut pos = Vec::new();
    let mut instances = Vec::new();
    for line in text.lines() {
        if let Some(c) = decl.captures(line) {
            let bits: Vec<String> = match (c.get(2), c.get(3)) {
                (Some(m), Some(l)) => {
                    let (m, l): (i64, i64) =
                        (m.as_str().parse().unwrap(), l.as_str().parse().unwrap());
                    (l.min(m)..=l.max(m))
                        .map(|i| format!("{}[{i}]", &c[4]))
                        .collect()
                }
                _ => vec![c[4].to_string()],
            };
            if &c[1] == "input" {
                pis.extend(bits)
            } else {
                pos.extend(bits)
            }
        } else if let Some(c) = inst.captures(line) {
            if &c[1] == "module" {
                continue;
            }
            let pins: Vec<(String, String)> = pin
                .captures_iter(&c[3])
                .map(|p| (p[1].to_string(), p[2].to_string()))
                .collect();
            instances.push((c[1].to_string(), c[2].to_string(), pins));
        }
    }
    let mut driver: HashMap<String, String> =
        pis.iter().map(|b| (b.clone(), format!("pi:{b}"))).collect();
    for (cell, name, pins) in &instances {
        let out = &lib.get(cell).unwrap().output;
        for (p, net) in pins {
            if p == out {
                driver.insert(net.clone(), format!("g:{name}"));
            }
        }
    }
    let mut edges = HashSet::new();
    for (cell, name, pins) in &instances {
        let out = &lib.get(cell).unwrap().output;
        for (p, net) in pins {
            if p != out {
                if let Some(d) = driver.get(net) {
                    edges.insert((d.clone(), format!("g:{name}")));
                }
            }
        }
    }
    for b in &pos {
        if let Some(d) = driver.get(b) {
            edges.insert((d.clone(), format!("po:{b}")));
        }
    }
    (pis.len() + pos.len() + instances.len(), edges.len())
}
