//! Random initialization, the four mutations and parameterization.
//!
//! Positions are numbered in pre-order over the operator nodes and leaves of
//! a graph, ignoring parameter decorations. Each position owns the edge
//! leaving it, so position numbers double as edge numbers and position 0 is
//! the output edge.

use std::fmt;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::graph::{ActivationGraph, BinaryOp, Expr, OperatorKind, UnaryOp, MAX_NODES, MAX_PARAMS};
use crate::seed::Rng;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    Insert,
    Remove,
    Change,
    Regenerate,
}

impl MutationKind {
    pub const ALL: [MutationKind; 4] = [
        MutationKind::Insert,
        MutationKind::Remove,
        MutationKind::Change,
        MutationKind::Regenerate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationKind::Insert => "insert",
            MutationKind::Remove => "remove",
            MutationKind::Change => "change",
            MutationKind::Regenerate => "regenerate",
        }
    }
}

impl fmt::Display for MutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Copy, Clone, Debug)]
struct Position {
    arity: usize,
    nodes: usize,
}

fn positions(e: &Expr) -> Vec<Position> {
    fn walk(e: &Expr, out: &mut Vec<Position>) {
        match e {
            Expr::Param(_, a) => walk(a, out),
            Expr::Input | Expr::Zero | Expr::One => out.push(Position { arity: 0, nodes: 0 }),
            Expr::Unary(_, a) => {
                out.push(Position {
                    arity: 1,
                    nodes: e.node_count(),
                });
                walk(a, out);
            }
            Expr::Binary(_, a, b) => {
                out.push(Position {
                    arity: 2,
                    nodes: e.node_count(),
                });
                walk(a, out);
                walk(b, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(e, &mut out);
    out
}

/// Rebuilds `e`, replacing the subtree at `target` with `f(subtree)`.
fn map_at(e: &Expr, target: usize, f: &mut dyn FnMut(&Expr) -> Expr) -> Expr {
    fn go(e: &Expr, target: usize, next: &mut usize, f: &mut dyn FnMut(&Expr) -> Expr) -> Expr {
        if let Expr::Param(i, a) = e {
            return Expr::param(*i, go(a, target, next, f));
        }
        let id = *next;
        *next += 1;
        if id == target {
            *next += positions(e).len() - 1;
            return f(e);
        }
        match e {
            Expr::Unary(op, a) => Expr::unary(*op, go(a, target, next, f)),
            Expr::Binary(op, a, b) => {
                let a = go(a, target, next, f);
                Expr::binary(*op, a, go(b, target, next, f))
            }
            leaf => leaf.clone(),
        }
    }
    let mut next = 0;
    go(e, target, &mut next, f)
}

fn random_unary(rng: &mut Rng) -> UnaryOp {
    UnaryOp::ALL[rng.random_range(0..UnaryOp::ALL.len())]
}

fn random_binary(rng: &mut Rng) -> BinaryOp {
    BinaryOp::ALL[rng.random_range(0..BinaryOp::ALL.len())]
}

fn graph(e: Expr) -> ActivationGraph {
    ActivationGraph::new(e).expect("mutation preserves graph structure")
}

/// Either `unary1(unary2(x))` or `binary(unary1(x), unary2(x))`, each with
/// probability 1/2, operators uniform within their class.
pub fn init_random(rng: &mut Rng) -> ActivationGraph {
    let e = if rng.random_bool(0.5) {
        let inner = random_unary(rng);
        Expr::unary(random_unary(rng), Expr::unary(inner, Expr::Input))
    } else {
        let op = random_binary(rng);
        let a = random_unary(rng);
        let b = random_unary(rng);
        Expr::binary(op, Expr::unary(a, Expr::Input), Expr::unary(b, Expr::Input))
    };
    graph(e)
}

/// Splices `op` onto the edge leaving position `edge`. A binary operator
/// receives the edge's value as its first input and a neutral second input:
/// 0 for add/sub, 1 for mul/safe_div/pow, and a copy of the first input for
/// max/min.
pub fn insert_operator(g: &ActivationGraph, edge: usize, op: OperatorKind) -> ActivationGraph {
    let bare = g.root().strip_params();
    assert!(edge < bare.edge_count(), "edge {edge} out of range");
    graph(map_at(&bare, edge, &mut |sub| match op {
        OperatorKind::Unary(u) => Expr::unary(u, sub.clone()),
        OperatorKind::Binary(b) => {
            let second = match b.neutral_operand() {
                Some(0.0) => Expr::Zero,
                Some(_) => Expr::One,
                None => sub.clone(),
            };
            Expr::binary(b, sub.clone(), second)
        }
    }))
}

/// Deletes the operator at position `node`. A unary node's input takes its
/// place; a binary node is replaced by its input in slot `keep`.
pub fn remove_node(g: &ActivationGraph, node: usize, keep: usize) -> ActivationGraph {
    let bare = g.root().strip_params();
    graph(map_at(&bare, node, &mut |sub| match sub {
        Expr::Unary(_, a) => (**a).clone(),
        Expr::Binary(_, a, b) => {
            if keep == 0 {
                (**a).clone()
            } else {
                (**b).clone()
            }
        }
        _ => panic!("position {node} is a leaf"),
    }))
}

/// Replaces the operator at position `node` with `op` of the same arity.
pub fn change_node(g: &ActivationGraph, node: usize, op: OperatorKind) -> ActivationGraph {
    let bare = g.root().strip_params();
    graph(map_at(&bare, node, &mut |sub| match (sub, op) {
        (Expr::Unary(_, a), OperatorKind::Unary(u)) => Expr::Unary(u, a.clone()),
        (Expr::Binary(_, a, b), OperatorKind::Binary(o)) => Expr::Binary(o, a.clone(), b.clone()),
        _ => panic!("arity mismatch at position {node}"),
    }))
}

/// Inserts a uniformly drawn operator on a uniformly drawn edge. Only a
/// seven-node parent may grow to the node limit; draws whose max/min copy
/// would grow the graph further are redrawn.
pub fn mutate_insert(g: &ActivationGraph, rng: &mut Rng) -> ActivationGraph {
    let n = g.node_count();
    assert!(n < MAX_NODES, "insert needs room for one more node");
    let limit = if n == MAX_NODES - 1 { MAX_NODES } else { MAX_NODES - 1 };
    let pos = positions(g.root());
    let all: Vec<OperatorKind> = OperatorKind::all().collect();
    loop {
        let op = all[rng.random_range(0..all.len())];
        let edge = rng.random_range(0..pos.len());
        let added = match op {
            OperatorKind::Binary(BinaryOp::Max | BinaryOp::Min) => 1 + pos[edge].nodes,
            _ => 1,
        };
        if n + added <= limit {
            return insert_operator(g, edge, op);
        }
    }
}

/// Deletes a uniformly drawn node. A binary node keeps a uniformly drawn
/// input, unless that would leave no operator at all.
pub fn mutate_remove(g: &ActivationGraph, rng: &mut Rng) -> ActivationGraph {
    assert!(g.node_count() >= 2, "remove needs at least two nodes");
    let pos = positions(g.root());
    let nodes: Vec<usize> = (0..pos.len()).filter(|&i| pos[i].arity > 0).collect();
    let node = nodes[rng.random_range(0..nodes.len())];
    let mut keep = 0;
    if pos[node].arity == 2 {
        keep = rng.random_range(0..2);
        if node == 0 {
            let bare = g.root().bare();
            if let Expr::Binary(_, a, b) = bare {
                let kept = if keep == 0 { a } else { b };
                if kept.node_count() == 0 {
                    keep = 1 - keep;
                }
            }
        }
    }
    remove_node(g, node, keep)
}

/// Replaces one uniformly drawn node's operator with a different operator
/// of the same arity.
pub fn mutate_change(g: &ActivationGraph, rng: &mut Rng) -> ActivationGraph {
    let pos = positions(g.root());
    let nodes: Vec<usize> = (0..pos.len()).filter(|&i| pos[i].arity > 0).collect();
    let node = nodes[rng.random_range(0..nodes.len())];
    let current = operator_at(g.root(), node);
    let op = match current {
        OperatorKind::Unary(u) => {
            let others: Vec<UnaryOp> = UnaryOp::ALL.into_iter().filter(|&o| o != u).collect();
            OperatorKind::Unary(others[rng.random_range(0..others.len())])
        }
        OperatorKind::Binary(b) => {
            let others: Vec<BinaryOp> = BinaryOp::ALL.into_iter().filter(|&o| o != b).collect();
            OperatorKind::Binary(others[rng.random_range(0..others.len())])
        }
    };
    change_node(g, node, op)
}

fn operator_at(e: &Expr, target: usize) -> OperatorKind {
    let mut found = None;
    let mut f = |sub: &Expr| {
        found = match sub {
            Expr::Unary(op, _) => Some(OperatorKind::Unary(*op)),
            Expr::Binary(op, _, _) => Some(OperatorKind::Binary(*op)),
            _ => None,
        };
        sub.clone()
    };
    map_at(e, target, &mut f);
    found.expect("position holds an operator")
}

/// Resamples every operator within its arity class; the structure is kept.
pub fn mutate_regenerate(g: &ActivationGraph, rng: &mut Rng) -> ActivationGraph {
    fn go(e: &Expr, rng: &mut Rng) -> Expr {
        match e {
            Expr::Param(_, a) => go(a, rng),
            Expr::Unary(_, a) => {
                let op = random_unary(rng);
                Expr::unary(op, go(a, rng))
            }
            Expr::Binary(_, a, b) => {
                let op = random_binary(rng);
                let a = go(a, rng);
                Expr::binary(op, a, go(b, rng))
            }
            leaf => leaf.clone(),
        }
    }
    graph(go(g.root(), rng))
}

/// Applies one uniformly drawn mutation to the parameter-free form of `g`.
/// A remove drawn for a one-node graph becomes a change, and a graph with
/// more than seven nodes is always shrunk by a remove.
pub fn mutate(g: &ActivationGraph, rng: &mut Rng) -> (ActivationGraph, MutationKind) {
    let drawn = MutationKind::ALL[rng.random_range(0..4)];
    let n = g.node_count();
    let kind = if n > MAX_NODES - 1 {
        MutationKind::Remove
    } else if drawn == MutationKind::Remove && n == 1 {
        MutationKind::Change
    } else {
        drawn
    };
    let child = match kind {
        MutationKind::Insert => mutate_insert(g, rng),
        MutationKind::Remove => mutate_remove(g, rng),
        MutationKind::Change => mutate_change(g, rng),
        MutationKind::Regenerate => mutate_regenerate(g, rng),
    };
    (child, kind)
}

/// Places parameters on the edges at the given positions, numbering them in
/// print order. Any existing parameters are removed first.
pub fn place_params(g: &ActivationGraph, edges: &[usize]) -> ActivationGraph {
    let bare = g.root().strip_params();
    let mut chosen = vec![false; bare.edge_count()];
    for &e in edges {
        chosen[e] = true;
    }
    graph(number_params(&bare, &chosen, &mut 0, &mut 0))
}

fn number_params(e: &Expr, chosen: &[bool], next_pos: &mut usize, next_idx: &mut usize) -> Expr {
    let here = *next_pos;
    *next_pos += 1;
    let index = if chosen[here] {
        *next_idx += 1;
        Some(*next_idx - 1)
    } else {
        None
    };
    let inner = match e {
        Expr::Unary(op, a) => Expr::unary(*op, number_params(a, chosen, next_pos, next_idx)),
        Expr::Binary(op, a, b) => {
            let a = number_params(a, chosen, next_pos, next_idx);
            Expr::binary(*op, a, number_params(b, chosen, next_pos, next_idx))
        }
        leaf => leaf.clone(),
    };
    match index {
        Some(i) => Expr::param(i, inner),
        None => inner,
    }
}

/// Draws `k` uniformly from 0..=3 and places parameters on `k` distinct
/// uniformly drawn edges (fewer if the graph has fewer edges).
pub fn parameterize(g: &ActivationGraph, rng: &mut Rng) -> ActivationGraph {
    let bare = g.strip_params();
    let k = rng.random_range(0..=MAX_PARAMS).min(bare.edge_count());
    let edges = sample(rng, bare.edge_count(), k).into_vec();
    place_params(&bare, &edges)
}

/// `n` graphs, each a random initialization followed by three mutations and
/// then parameterized.
pub fn sample_random_functions(n: usize, rng: &mut Rng) -> Vec<ActivationGraph> {
    (0..n)
        .map(|_| {
            let mut g = init_random(rng);
            for _ in 0..3 {
                g = mutate(&g, rng).0;
            }
            parameterize(&g, rng)
        })
        .collect()
}
