//! Enumeration of operator skeletons with placeholder operators.
//!
//! A skeleton is printed with `u(...)` for a unary node and `b(..., ...)`
//! for a binary node. Every input of a binary node is either a unary chain
//! or another binary node, never a bare `x`; mirror images are distinct.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::census::{shape_pairs, ArrangementRow};

fn skeletons(b: u32, u: u32, memo: &mut BTreeMap<(u32, u32), Vec<String>>) -> Vec<String> {
    if let Some(v) = memo.get(&(b, u)) {
        return v.clone();
    }
    let mut out = Vec::new();
    if b == 0 {
        let mut s = "x".to_string();
        for _ in 0..u {
            s = format!("u({s})");
        }
        out.push(s);
    } else {
        if u > 0 {
            for inner in skeletons(b, u - 1, memo) {
                out.push(format!("u({inner})"));
            }
        }
        for bl in 0..b {
            let br = b - 1 - bl;
            for ul in 0..=u {
                let lefts = inputs(bl, ul, memo);
                if lefts.is_empty() {
                    continue;
                }
                let rights = inputs(br, u - ul, memo);
                for l in &lefts {
                    for r in &rights {
                        out.push(format!("b({l}, {r})"));
                    }
                }
            }
        }
    }
    memo.insert((b, u), out.clone());
    out
}

fn inputs(b: u32, u: u32, memo: &mut BTreeMap<(u32, u32), Vec<String>>) -> Vec<String> {
    if b == 0 && u == 0 {
        return Vec::new();
    }
    skeletons(b, u, memo)
}

/// All skeletons with exactly `b` binary and `u` unary nodes.
pub fn enumerate_shapes(b: u32, u: u32) -> Vec<String> {
    if u == 0 {
        return Vec::new();
    }
    skeletons(b, u, &mut BTreeMap::new())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub b: u32,
    pub u: u32,
    pub enumerated: u64,
    pub table: Option<u64>,
    pub agrees: bool,
}

/// Compares enumerated counts with `table` for every valid pair up to
/// `max_nodes` nodes.
pub fn compare_arrangements(max_nodes: u32, table: &[ArrangementRow]) -> Vec<ShapeReport> {
    (1..=max_nodes)
        .flat_map(shape_pairs)
        .map(|(b, u)| {
            let enumerated = enumerate_shapes(b, u).len() as u64;
            let table = table.iter().find(|r| r.b == b && r.u == u).map(|r| r.arrangements);
            ShapeReport {
                b,
                u,
                enumerated,
                table,
                agrees: table == Some(enumerated),
            }
        })
        .collect()
}
