//! Activation functions as expression trees over the operator vocabulary.
//!
//! A graph is a rooted tree. Interior positions hold operators; leaves read
//! the scalar input `x` or one of the constants `0` and `1` (which appear as
//! the neutral second operand after a binary insertion). Every position owns
//! exactly one outgoing edge, the root's being the output edge, so the edge
//! count of a graph with `u` unary and `b` binary nodes is `u + 2b + 1`.
//!
//! Learnable parameters are decorations on edges: `Expr::Param(i, e)`
//! multiplies the value flowing out of `e` by parameter `i`.

mod bessel;
mod json;
mod ops;
mod tape;
mod text;

use std::fmt;

pub use json::{GraphJson, JsonError};
pub use ops::{
    elu, hard_sigmoid, relu, selu, sigmoid, softplus, BinaryOp, OperatorKind, UnaryOp, ELU_ALPHA, SELU_ALPHA,
    SELU_LAMBDA,
};
pub use tape::Tape;
pub use text::{ParseError, ParseErrorKind, ParseLimits};

/// Maximum number of operator nodes in an evolvable graph.
pub const MAX_NODES: usize = 8;
/// Maximum number of learnable parameters in an evolvable graph.
pub const MAX_PARAMS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Input,
    Zero,
    One,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Param(usize, Box<Expr>),
}

impl Expr {
    pub fn unary(op: UnaryOp, arg: Expr) -> Expr {
        Expr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn param(index: usize, arg: Expr) -> Expr {
        Expr::Param(index, Box::new(arg))
    }

    /// The expression with any parameter decoration on its own edge removed.
    pub fn bare(&self) -> &Expr {
        match self {
            Expr::Param(_, e) => e.bare(),
            e => e,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.bare(), Expr::Input | Expr::Zero | Expr::One)
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Input | Expr::Zero | Expr::One => 0,
            Expr::Unary(_, a) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
            Expr::Param(_, a) => a.node_count(),
        }
    }

    fn count_kinds(&self, unary: &mut usize, binary: &mut usize) {
        match self {
            Expr::Input | Expr::Zero | Expr::One => {}
            Expr::Unary(_, a) => {
                *unary += 1;
                a.count_kinds(unary, binary);
            }
            Expr::Binary(_, a, b) => {
                *binary += 1;
                a.count_kinds(unary, binary);
                b.count_kinds(unary, binary);
            }
            Expr::Param(_, a) => a.count_kinds(unary, binary),
        }
    }

    /// Number of edges, i.e. of non-parameter positions.
    pub fn edge_count(&self) -> usize {
        match self {
            Expr::Input | Expr::Zero | Expr::One => 1,
            Expr::Unary(_, a) => 1 + a.edge_count(),
            Expr::Binary(_, a, b) => 1 + a.edge_count() + b.edge_count(),
            Expr::Param(_, a) => a.edge_count(),
        }
    }

    pub fn strip_params(&self) -> Expr {
        match self {
            Expr::Input => Expr::Input,
            Expr::Zero => Expr::Zero,
            Expr::One => Expr::One,
            Expr::Unary(op, a) => Expr::unary(*op, a.strip_params()),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.strip_params(), b.strip_params()),
            Expr::Param(_, a) => a.strip_params(),
        }
    }

    fn visit_params(&self, f: &mut impl FnMut(usize)) {
        match self {
            Expr::Input | Expr::Zero | Expr::One => {}
            Expr::Unary(_, a) => a.visit_params(f),
            Expr::Binary(_, a, b) => {
                a.visit_params(f);
                b.visit_params(f);
            }
            Expr::Param(i, a) => {
                f(*i);
                a.visit_params(f);
            }
        }
    }

    /// Evaluates the tree directly, without compiling it.
    pub fn eval(&self, params: &[f64], x: f64) -> f64 {
        match self {
            Expr::Input => x,
            Expr::Zero => 0.0,
            Expr::One => 1.0,
            Expr::Unary(op, a) => op.apply(a.eval(params, x)),
            Expr::Binary(op, a, b) => op.apply(a.eval(params, x), b.eval(params, x)),
            Expr::Param(i, a) => params[*i] * a.eval(params, x),
        }
    }
}

/// An activation function: an expression tree whose root is an operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActivationGraph {
    root: Expr,
}

/// Failure to build a graph from an expression.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("graph must contain at least one operator node")]
    NoOperators,
    #[error("parameter indices must be 0..k-1 without gaps, found {0:?}")]
    ParamIndexGap(Vec<usize>),
    #[error("an edge carries more than one parameter")]
    StackedParams,
    #[error("graph has {0} nodes, more than the limit of {MAX_NODES}")]
    TooManyNodes(usize),
    #[error("graph has {0} parameter sites, more than the limit of {MAX_PARAMS}")]
    TooManyParams(usize),
    #[error("parameter index {0} is used on more than one edge")]
    SharedParam(usize),
}

impl ActivationGraph {
    /// Wraps an expression, checking the structural invariants that hold for
    /// every graph (at least one operator, contiguous parameter indices, at
    /// most one parameter per edge). Size limits are checked separately by
    /// [`ActivationGraph::check_genotype`].
    pub fn new(root: Expr) -> Result<Self, GraphError> {
        if root.node_count() == 0 {
            return Err(GraphError::NoOperators);
        }
        if has_stacked_params(&root) {
            return Err(GraphError::StackedParams);
        }
        let mut seen = Vec::new();
        root.visit_params(&mut |i| seen.push(i));
        seen.sort_unstable();
        seen.dedup();
        if seen.iter().enumerate().any(|(pos, &i)| pos != i) {
            return Err(GraphError::ParamIndexGap(seen));
        }
        Ok(ActivationGraph { root })
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn into_root(self) -> Expr {
        self.root
    }

    /// Checks the limits that apply to evolvable graphs: at most
    /// [`MAX_NODES`] nodes and at most [`MAX_PARAMS`] parameter sites, each
    /// with its own index.
    pub fn check_genotype(&self) -> Result<(), GraphError> {
        let n = self.node_count();
        if n > MAX_NODES {
            return Err(GraphError::TooManyNodes(n));
        }
        let sites = self.param_sites();
        if sites.len() > MAX_PARAMS {
            return Err(GraphError::TooManyParams(sites.len()));
        }
        let mut idx: Vec<usize> = sites.iter().map(|s| s.index).collect();
        idx.sort_unstable();
        if let Some(w) = idx.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::SharedParam(w[0]));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// `(binary nodes, unary nodes, edges)`.
    pub fn shape_signature(&self) -> (usize, usize, usize) {
        let (mut u, mut b) = (0, 0);
        self.root.count_kinds(&mut u, &mut b);
        (b, u, u + 2 * b + 1)
    }

    pub fn edge_count(&self) -> usize {
        self.root.edge_count()
    }

    /// Number of distinct learnable parameters.
    pub fn param_count(&self) -> usize {
        let mut max = None;
        self.root
            .visit_params(&mut |i| max = Some(max.map_or(i, |m: usize| m.max(i))));
        max.map_or(0, |m| m + 1)
    }

    /// Parameter sites in pre-order, identified by their edge.
    pub fn param_sites(&self) -> Vec<ParamSite> {
        let mut out = Vec::new();
        let mut next_id = 0;
        collect_sites(&self.root, EdgeRef::Output, &mut next_id, &mut out);
        out
    }

    pub fn strip_params(&self) -> ActivationGraph {
        ActivationGraph {
            root: self.root.strip_params(),
        }
    }

    pub fn has_params(&self) -> bool {
        self.param_count() > 0
    }

    /// Evaluates the function at `x`. `params.len()` must equal
    /// [`ActivationGraph::param_count`].
    pub fn eval(&self, params: &ParamValues, x: f64) -> f64 {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        self.root.eval(params.as_slice(), x)
    }

    /// Value, derivative with respect to `x`, and gradient with respect to
    /// each parameter, by a reverse sweep over the compiled tape.
    pub fn eval_grad(&self, params: &ParamValues, x: f64) -> (f64, f64, Vec<f64>) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let tape = Tape::compile(self);
        let mut dparams = vec![0.0; tape.param_count()];
        let (v, dx) = tape.eval_grad(x, params.as_slice(), &mut dparams);
        (v, dx, dparams)
    }

    /// Smallest distance, over every operator in the evaluation at `x`, from
    /// an operator input to a point where that operator is non-smooth or
    /// singular. Infinite when no such point exists.
    pub fn kink_margin(&self, params: &ParamValues, x: f64) -> f64 {
        let mut margin = f64::INFINITY;
        kink_margin(&self.root, params.as_slice(), x, &mut margin);
        margin
    }

    pub fn to_text(&self) -> String {
        text::print(&self.root)
    }

    /// Parses an evolvable graph: at most three parameters, each on one edge.
    pub fn parse(s: &str) -> Result<Self, ParseError> {
        text::parse(s, ParseLimits::genotype())
    }

    /// Parses any well-formed graph, including constructions that exceed the
    /// evolvable size limits or share a parameter between edges.
    pub fn parse_unbounded(s: &str) -> Result<Self, ParseError> {
        text::parse(s, ParseLimits::unbounded())
    }

    pub fn to_json(&self) -> GraphJson {
        json::to_json(self)
    }

    pub fn from_json(g: &GraphJson) -> Result<Self, JsonError> {
        json::from_json(g)
    }
}

impl fmt::Display for ActivationGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl std::str::FromStr for ActivationGraph {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivationGraph::parse(s)
    }
}

fn has_stacked_params(e: &Expr) -> bool {
    match e {
        Expr::Input | Expr::Zero | Expr::One => false,
        Expr::Unary(_, a) => has_stacked_params(a),
        Expr::Binary(_, a, b) => has_stacked_params(a) || has_stacked_params(b),
        Expr::Param(_, a) => matches!(**a, Expr::Param(..)) || has_stacked_params(a),
    }
}

/// An edge, named by the operator that consumes it.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum EdgeRef {
    /// The edge from the root to the graph output.
    Output,
    /// Input `slot` of the node with pre-order id `consumer`.
    Slot { consumer: usize, slot: usize },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParamSite {
    pub edge: EdgeRef,
    pub index: usize,
}

fn collect_sites(e: &Expr, edge: EdgeRef, next_id: &mut usize, out: &mut Vec<ParamSite>) {
    match e {
        Expr::Input | Expr::Zero | Expr::One => {}
        Expr::Param(i, a) => {
            out.push(ParamSite { edge, index: *i });
            collect_sites(a, edge, next_id, out);
        }
        Expr::Unary(_, a) => {
            let id = *next_id;
            *next_id += 1;
            collect_sites(a, EdgeRef::Slot { consumer: id, slot: 0 }, next_id, out);
        }
        Expr::Binary(_, a, b) => {
            let id = *next_id;
            *next_id += 1;
            collect_sites(a, EdgeRef::Slot { consumer: id, slot: 0 }, next_id, out);
            collect_sites(b, EdgeRef::Slot { consumer: id, slot: 1 }, next_id, out);
        }
    }
}

fn kink_margin(e: &Expr, params: &[f64], x: f64, margin: &mut f64) -> f64 {
    match e {
        Expr::Input => x,
        Expr::Zero => 0.0,
        Expr::One => 1.0,
        Expr::Param(i, a) => params[*i] * kink_margin(a, params, x, margin),
        Expr::Unary(op, a) => {
            let v = kink_margin(a, params, x, margin);
            for k in op.kinks() {
                *margin = margin.min((v - k).abs());
            }
            op.apply(v)
        }
        Expr::Binary(op, a, b) => {
            let va = kink_margin(a, params, x, margin);
            let vb = kink_margin(b, params, x, margin);
            match op {
                BinaryOp::Max | BinaryOp::Min => *margin = margin.min((va - vb).abs()),
                BinaryOp::SafeDiv => *margin = margin.min(vb.abs()),
                BinaryOp::Pow => *margin = margin.min(va.abs()),
                _ => {}
            }
            op.apply(va, vb)
        }
    }
}

/// Values of a graph's learnable parameters; index 0, 1, 2 are the
/// conventional alpha, beta, gamma.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamValues(Vec<f64>);

impl ParamValues {
    /// Fresh parameters, all exactly 1.
    pub fn ones(n: usize) -> Self {
        ParamValues(vec![1.0; n])
    }

    pub fn for_graph(g: &ActivationGraph) -> Self {
        Self::ones(g.param_count())
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        ParamValues(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}
