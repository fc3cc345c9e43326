//! Postfix compilation of a graph for repeated scalar evaluation.

use smallvec::SmallVec;

use super::{ActivationGraph, BinaryOp, Expr, UnaryOp};

#[derive(Copy, Clone, Debug, PartialEq)]
enum Instr {
    Input,
    Const(f64),
    Scale { arg: usize, param: usize },
    Unary { op: UnaryOp, arg: usize },
    Binary { op: BinaryOp, lhs: usize, rhs: usize },
}

type Scratch = SmallVec<[f64; 32]>;

/// A graph flattened into a postfix instruction list. Slot `i` of the value
/// buffer holds the output of instruction `i`; the last slot is the output.
#[derive(Clone, Debug, PartialEq)]
pub struct Tape {
    code: Vec<Instr>,
    params: usize,
}

impl Tape {
    pub fn compile(graph: &ActivationGraph) -> Tape {
        let mut code = Vec::with_capacity(graph.edge_count() + graph.param_sites().len());
        emit(graph.root(), &mut code);
        Tape {
            code,
            params: graph.param_count(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    fn forward(&self, x: f64, params: &[f64], vals: &mut Scratch) {
        vals.clear();
        for ins in &self.code {
            let v = match *ins {
                Instr::Input => x,
                Instr::Const(c) => c,
                Instr::Scale { arg, param } => params[param] * vals[arg],
                Instr::Unary { op, arg } => op.apply(vals[arg]),
                Instr::Binary { op, lhs, rhs } => op.apply(vals[lhs], vals[rhs]),
            };
            vals.push(v);
        }
    }

    pub fn eval(&self, x: f64, params: &[f64]) -> f64 {
        debug_assert_eq!(params.len(), self.params);
        let mut vals = Scratch::new();
        self.forward(x, params, &mut vals);
        vals[vals.len() - 1]
    }

    /// Returns `(f(x), df/dx)` and overwrites `dparams` with `df/dp_i`.
    ///
    /// Adjoints that are exactly zero are not propagated, so a branch masked
    /// out by relu, max or safe_div contributes nothing even where its own
    /// local derivative is infinite.
    pub fn eval_grad(&self, x: f64, params: &[f64], dparams: &mut [f64]) -> (f64, f64) {
        debug_assert_eq!(params.len(), self.params);
        debug_assert_eq!(dparams.len(), self.params);
        let mut vals = Scratch::new();
        self.forward(x, params, &mut vals);
        let n = vals.len();
        let mut adj: Scratch = SmallVec::from_elem(0.0, n);
        adj[n - 1] = 1.0;
        dparams.iter_mut().for_each(|d| *d = 0.0);
        let mut dx = 0.0;
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            match self.code[i] {
                Instr::Input => dx += a,
                Instr::Const(_) => {}
                Instr::Scale { arg, param } => {
                    dparams[param] += a * vals[arg];
                    adj[arg] += a * params[param];
                }
                Instr::Unary { op, arg } => adj[arg] += a * op.derivative(vals[arg]),
                Instr::Binary { op, lhs, rhs } => {
                    let (dl, dr) = op.partials(vals[lhs], vals[rhs]);
                    adj[lhs] += a * dl;
                    adj[rhs] += a * dr;
                }
            }
        }
        (vals[n - 1], dx)
    }
}

fn emit(e: &Expr, code: &mut Vec<Instr>) -> usize {
    let ins = match e {
        Expr::Input => Instr::Input,
        Expr::Zero => Instr::Const(0.0),
        Expr::One => Instr::Const(1.0),
        Expr::Param(i, a) => Instr::Scale {
            arg: emit(a, code),
            param: *i,
        },
        Expr::Unary(op, a) => Instr::Unary {
            op: *op,
            arg: emit(a, code),
        },
        Expr::Binary(op, a, b) => {
            let lhs = emit(a, code);
            let rhs = emit(b, code);
            Instr::Binary { op: *op, lhs, rhs }
        }
    };
    code.push(ins);
    code.len() - 1
}
