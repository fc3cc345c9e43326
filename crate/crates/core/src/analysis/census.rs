//! Exact counts of the functions representable with a bounded number of
//! operator nodes and learnable parameters.

use serde::{Deserialize, Serialize};

/// Number of unary operators in the vocabulary.
pub const UNARY_OPS: u64 = 27;
/// Number of binary operators in the vocabulary.
pub const BINARY_OPS: u64 = 7;
/// Maximum number of learnable parameters per function.
pub const MAX_EDGE_PARAMS: u64 = 3;

/// Number of distinct skeleton arrangements for one `(b, u)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrangementRow {
    pub b: u32,
    pub u: u32,
    pub arrangements: u64,
}

/// Reference arrangement counts for graphs of one to seven nodes.
pub const DEFAULT_ARRANGEMENTS: [ArrangementRow; 16] = [
    row(0, 1, 1),
    row(0, 2, 1),
    row(0, 3, 1),
    row(1, 2, 1),
    row(0, 4, 1),
    row(1, 3, 3),
    row(0, 5, 1),
    row(1, 4, 6),
    row(2, 3, 2),
    row(0, 6, 1),
    row(1, 5, 10),
    row(2, 4, 10),
    row(0, 7, 1),
    row(1, 6, 15),
    row(2, 5, 30),
    row(3, 4, 1),
];

const fn row(b: u32, u: u32, arrangements: u64) -> ArrangementRow {
    ArrangementRow { b, u, arrangements }
}

/// How many parameter placements count per graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinomialSum {
    /// `sum_{i=0}^{min(e, E)} C(e, i)`: at most `E` parameters.
    Capped,
    /// `sum_{i=0}^{e} C(e, i) = 2^e`: any subset of edges.
    Uncapped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusRow {
    pub nodes: u32,
    pub b: u32,
    pub u: u32,
    pub e: u32,
    pub arrangements: u64,
    pub functions: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusGroup {
    pub nodes: u32,
    pub rows: Vec<CensusRow>,
    pub functions: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceCensus {
    pub unary_ops: u64,
    pub binary_ops: u64,
    pub max_params: u64,
    pub binomial_sum: BinomialSum,
    pub groups: Vec<CensusGroup>,
    pub total: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CensusError {
    #[error("no arrangement count for b = {b}, u = {u}")]
    MissingRow { b: u32, u: u32 },
    #[error("count overflows 128 bits")]
    Overflow,
}

#[derive(Clone, Debug)]
pub struct CensusOptions {
    pub max_nodes: u32,
    pub unary_ops: u64,
    pub binary_ops: u64,
    pub max_params: u64,
    pub binomial_sum: BinomialSum,
}

impl Default for CensusOptions {
    fn default() -> Self {
        CensusOptions {
            max_nodes: 7,
            unary_ops: UNARY_OPS,
            binary_ops: BINARY_OPS,
            max_params: MAX_EDGE_PARAMS,
            binomial_sum: BinomialSum::Capped,
        }
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Ways to decorate `e` edges with parameters.
pub fn placements(e: u64, max_params: u64, sum: BinomialSum) -> u128 {
    let top = match sum {
        BinomialSum::Capped => e.min(max_params),
        BinomialSum::Uncapped => e,
    };
    (0..=top).map(|i| binomial(e, i)).sum()
}

/// Functions per arrangement of a graph with `u` unary and `b` binary nodes.
pub fn functions_per_graph(u: u32, b: u32, opts: &CensusOptions) -> Option<u128> {
    let e = u as u64 + 2 * b as u64 + 1;
    let ops = (opts.unary_ops as u128)
        .checked_pow(u)?
        .checked_mul((opts.binary_ops as u128).checked_pow(b)?)?;
    ops.checked_mul(placements(e, opts.max_params, opts.binomial_sum))
}

/// Pairs `(b, u)` with `b + u = nodes` that admit a valid graph: every one
/// of the `b + 1` binary inputs needs at least one unary node.
pub fn shape_pairs(nodes: u32) -> Vec<(u32, u32)> {
    (0..nodes).map(|b| (b, nodes - b)).filter(|&(b, u)| u > b).collect()
}

pub fn count_space(opts: &CensusOptions, table: &[ArrangementRow]) -> Result<SpaceCensus, CensusError> {
    let mut groups = Vec::new();
    let mut total: u128 = 0;
    for nodes in 1..=opts.max_nodes {
        let mut rows = Vec::new();
        let mut sub: u128 = 0;
        for (b, u) in shape_pairs(nodes) {
            let arrangements = table
                .iter()
                .find(|r| r.b == b && r.u == u)
                .ok_or(CensusError::MissingRow { b, u })?
                .arrangements;
            let functions = functions_per_graph(u, b, opts)
                .and_then(|f| f.checked_mul(arrangements as u128))
                .ok_or(CensusError::Overflow)?;
            sub = sub.checked_add(functions).ok_or(CensusError::Overflow)?;
            rows.push(CensusRow {
                nodes,
                b,
                u,
                e: u + 2 * b + 1,
                arrangements,
                functions,
            });
        }
        total = total.checked_add(sub).ok_or(CensusError::Overflow)?;
        groups.push(CensusGroup {
            nodes,
            rows,
            functions: sub,
        });
    }
    Ok(SpaceCensus {
        unary_ops: opts.unary_ops,
        binary_ops: opts.binary_ops,
        max_params: opts.max_params,
        binomial_sum: opts.binomial_sum,
        groups,
        total,
    })
}

/// Formats an integer with comma thousands separators.
pub fn with_commas(n: u128) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl SpaceCensus {
    pub fn group(&self, nodes: u32) -> Option<&CensusGroup> {
        self.groups.iter().find(|g| g.nodes == nodes)
    }

    /// Fixed-width table, one line per row, a subtotal per node count and a
    /// final total line.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:>5} {:>3} {:>3} {:>3} {:>12} {:>22}\n",
            "nodes", "b", "u", "e", "arrangements", "functions"
        );
        for g in &self.groups {
            for r in &g.rows {
                s += &format!(
                    "{:>5} {:>3} {:>3} {:>3} {:>12} {:>22}\n",
                    r.nodes,
                    r.b,
                    r.u,
                    r.e,
                    r.arrangements,
                    with_commas(r.functions)
                );
            }
            s += &format!("G{:<4} {:>49}\n", g.nodes, with_commas(g.functions));
        }
        s += &format!("total {:>49}\n", with_commas(self.total));
        s
    }
}
