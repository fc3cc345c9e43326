//! Interval and point indicators built from max, min, sub, mul and safe_div.
//!
//! Constants enter through parameter sites on `1` leaves, so `p0(1)` with
//! parameter 0 fixed to `a` contributes the value `a`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{ActivationGraph, BinaryOp, Expr, ParamValues};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    /// `1` on `(-inf, b)`.
    Left,
    /// `1` on `(a, inf)`.
    Right,
    /// `1` on `(a, b)`.
    OpenInterval,
    /// `1` at `a` only.
    Point,
}

impl IndicatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IndicatorKind::Left => "left",
            IndicatorKind::Right => "right",
            IndicatorKind::OpenInterval => "open_interval",
            IndicatorKind::Point => "point",
        }
    }

    /// The mathematical indicator.
    pub fn contains(self, a: f64, b: f64, x: f64) -> bool {
        match self {
            IndicatorKind::Left => x < b,
            IndicatorKind::Right => x > a,
            IndicatorKind::OpenInterval => a < x && x < b,
            IndicatorKind::Point => x == a,
        }
    }
}

impl FromStr for IndicatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "left" => Ok(IndicatorKind::Left),
            "right" => Ok(IndicatorKind::Right),
            "open_interval" | "interval" => Ok(IndicatorKind::OpenInterval),
            "point" => Ok(IndicatorKind::Point),
            _ => Err(format!(
                "unknown indicator kind {s:?} (left, right, open_interval, point)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndicatorError {
    #[error("interval needs a < b, got a = {a}, b = {b}")]
    EmptyInterval { a: f64, b: f64 },
    #[error("bounds must be finite")]
    NonFinite,
}

/// A graph together with fixed values for its parameter sites.
#[derive(Clone, Debug, PartialEq)]
pub struct Construction {
    pub graph: ActivationGraph,
    pub params: ParamValues,
}

impl Construction {
    pub fn eval(&self, x: f64) -> f64 {
        self.graph.eval(&self.params, x)
    }
}

pub(crate) fn constant(index: usize) -> Expr {
    Expr::param(index, Expr::One)
}

fn bin(op: BinaryOp, l: Expr, r: Expr) -> Expr {
    Expr::binary(op, l, r)
}

/// `max(c - x, 0) / (c - x)` with `c` read from parameter `index`.
pub(crate) fn below(index: usize) -> Expr {
    let diff = || bin(BinaryOp::Sub, constant(index), Expr::Input);
    bin(BinaryOp::SafeDiv, bin(BinaryOp::Max, diff(), Expr::Zero), diff())
}

/// `min(c - x, 0) / (c - x)` with `c` read from parameter `index`.
pub(crate) fn above(index: usize) -> Expr {
    let diff = || bin(BinaryOp::Sub, constant(index), Expr::Input);
    bin(BinaryOp::SafeDiv, bin(BinaryOp::Min, diff(), Expr::Zero), diff())
}

/// `(1 - below(c)) * (1 - above(c))`.
pub(crate) fn at(index: usize) -> Expr {
    bin(
        BinaryOp::Mul,
        bin(BinaryOp::Sub, Expr::One, below(index)),
        bin(BinaryOp::Sub, Expr::One, above(index)),
    )
}

pub(crate) fn between(lo: usize, hi: usize) -> Expr {
    bin(BinaryOp::Mul, below(hi), above(lo))
}

/// Builds the indicator of `kind`. `Left` uses only `b`; `Right` and
/// `Point` use only `a`.
pub fn build_indicator(kind: IndicatorKind, a: f64, b: f64) -> Result<Construction, IndicatorError> {
    let (root, values) = match kind {
        IndicatorKind::Left => (below(0), vec![b]),
        IndicatorKind::Right => (above(0), vec![a]),
        IndicatorKind::Point => (at(0), vec![a]),
        IndicatorKind::OpenInterval => {
            if !(a < b) {
                return Err(IndicatorError::EmptyInterval { a, b });
            }
            (between(0, 1), vec![a, b])
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(IndicatorError::NonFinite);
    }
    let graph = ActivationGraph::new(root).expect("indicator graphs are well formed");
    Ok(Construction {
        graph,
        params: ParamValues::from_vec(values),
    })
}
