//! Piecewise functions assembled as an indicator-gated sum of polynomial
//! pieces and point values.

use serde::{Deserialize, Serialize};

use super::indicator::{above, at, below, between, constant, Construction};
use crate::graph::{ActivationGraph, BinaryOp, Expr, ParamValues};

/// Truncated power series `sum_j coefficients[j] * (x - center)^j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    #[serde(default)]
    pub center: f64,
    pub coefficients: Vec<f64>,
}

impl Piece {
    pub fn new(center: f64, coefficients: Vec<f64>) -> Self {
        Piece { center, coefficients }
    }

    pub fn constant(c: f64) -> Self {
        Piece::new(0.0, vec![c])
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let t = x - self.center;
        self.coefficients.iter().rev().fold(0.0, |acc, &c| c + t * acc)
    }
}

/// `pieces[0]` on `(-inf, k_1)`, `values[i]` at `k_{i+1}`, `pieces[i]` on
/// `(k_i, k_{i+1})` and `pieces[n]` on `(k_n, inf)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseSpec {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PiecewiseError {
    #[error("breakpoints must be finite and strictly increasing")]
    Breakpoints,
    #[error("{breakpoints} breakpoints need {breakpoints} point values and {} pieces, got {values} and {pieces}", breakpoints + 1)]
    Counts {
        breakpoints: usize,
        values: usize,
        pieces: usize,
    },
    #[error("piece {0} has no coefficients")]
    EmptyPiece(usize),
    #[error("constants must be finite")]
    NonFinite,
}

impl PiecewiseSpec {
    pub fn validate(&self) -> Result<(), PiecewiseError> {
        let k = &self.breakpoints;
        if k.iter().any(|v| !v.is_finite()) || k.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PiecewiseError::Breakpoints);
        }
        if self.values.len() != k.len() || self.pieces.len() != k.len() + 1 {
            return Err(PiecewiseError::Counts {
                breakpoints: k.len(),
                values: self.values.len(),
                pieces: self.pieces.len(),
            });
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if p.coefficients.is_empty() {
                return Err(PiecewiseError::EmptyPiece(i));
            }
            if !p.center.is_finite() || p.coefficients.iter().any(|c| !c.is_finite()) {
                return Err(PiecewiseError::NonFinite);
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(PiecewiseError::NonFinite);
        }
        Ok(())
    }

    /// Direct evaluation by locating `x` among the breakpoints.
    pub fn eval(&self, x: f64) -> f64 {
        for (i, &k) in self.breakpoints.iter().enumerate() {
            if x < k {
                return self.pieces[i].eval(x);
            }
            if x == k {
                return self.values[i];
            }
        }
        self.pieces[self.breakpoints.len()].eval(x)
    }
}

struct Constants(Vec<f64>);

impl Constants {
    fn push(&mut self, v: f64) -> Expr {
        self.0.push(v);
        constant(self.0.len() - 1)
    }
}

fn horner(piece: &Piece, consts: &mut Constants) -> Expr {
    let t = || Expr::Input;
    let mut centered = None;
    let mut acc: Option<Expr> = None;
    for &c in piece.coefficients.iter().rev() {
        let c = consts.push(c);
        acc = Some(match acc {
            None => c,
            Some(inner) => {
                let t = centered.get_or_insert_with(|| {
                    if piece.center == 0.0 {
                        t()
                    } else {
                        Expr::binary(BinaryOp::Sub, t(), consts.push(piece.center))
                    }
                });
                Expr::binary(BinaryOp::Add, c, Expr::binary(BinaryOp::Mul, t.clone(), inner))
            }
        });
    }
    acc.expect("piece has coefficients")
}

/// Builds the indicator-weighted sum. Breakpoints occupy parameters
/// `0..n`, followed by point values, centers and coefficients. The result
/// is not a bounded genotype.
pub fn compile_piecewise(spec: &PiecewiseSpec) -> Result<Construction, PiecewiseError> {
    spec.validate()?;
    let n = spec.breakpoints.len();
    let mut consts = Constants(spec.breakpoints.clone());
    let mut terms = Vec::new();
    for i in 0..=n {
        let gate = match (i, n) {
            (_, 0) => None,
            (0, _) => Some(below(0)),
            (i, n) if i == n => Some(above(n - 1)),
            (i, _) => Some(between(i - 1, i)),
        };
        let f = horner(&spec.pieces[i], &mut consts);
        terms.push(match gate {
            Some(g) => Expr::binary(BinaryOp::Mul, g, f),
            None => f,
        });
        if i < n {
            let v = consts.push(spec.values[i]);
            terms.push(Expr::binary(BinaryOp::Mul, at(i), v));
        }
    }
    let root = terms
        .into_iter()
        .reduce(|acc, t| Expr::binary(BinaryOp::Add, acc, t))
        .expect("at least one piece");
    let root = if root.node_count() == 0 {
        Expr::binary(BinaryOp::Add, root, Expr::Zero)
    } else {
        root
    };
    let graph = ActivationGraph::new(root).expect("compiled graphs are well formed");
    Ok(Construction {
        graph,
        params: ParamValues::from_vec(consts.0),
    })
}
