//! The fixed operator vocabulary: 27 unary and 7 binary kinds.
//!
//! Every operator is total over the reals. Non-finite outputs are legal
//! values and propagate; callers decide what to do with them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bessel;

/// Scale constant of SELU.
pub const SELU_LAMBDA: f64 = 1.05070098;
/// Saturation constant of SELU.
pub const SELU_ALPHA: f64 = 1.67326324;
/// Saturation constant of ELU.
pub const ELU_ALPHA: f64 = 1.0;

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryOp {
    Const0,
    Const1,
    Identity,
    Negate,
    Abs,
    SafeReciprocal,
    Square,
    Exp,
    Expm1,
    Erf,
    Erfc,
    Sinh,
    Cosh,
    Tanh,
    Sigmoid,
    LogSigmoid,
    Arcsinh,
    Arctan,
    BesselI0e,
    BesselI1e,
    Relu,
    Elu,
    Selu,
    Swish,
    Softplus,
    Softsign,
    HardSigmoid,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    SafeDiv,
    Pow,
    Max,
    Min,
}

/// Either kind of operator, used where a node's arity is not known statically.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperatorKind {
    Unary(UnaryOp),
    Binary(BinaryOp),
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 27] = [
        UnaryOp::Const0,
        UnaryOp::Const1,
        UnaryOp::Identity,
        UnaryOp::Negate,
        UnaryOp::Abs,
        UnaryOp::SafeReciprocal,
        UnaryOp::Square,
        UnaryOp::Exp,
        UnaryOp::Expm1,
        UnaryOp::Erf,
        UnaryOp::Erfc,
        UnaryOp::Sinh,
        UnaryOp::Cosh,
        UnaryOp::Tanh,
        UnaryOp::Sigmoid,
        UnaryOp::LogSigmoid,
        UnaryOp::Arcsinh,
        UnaryOp::Arctan,
        UnaryOp::BesselI0e,
        UnaryOp::BesselI1e,
        UnaryOp::Relu,
        UnaryOp::Elu,
        UnaryOp::Selu,
        UnaryOp::Swish,
        UnaryOp::Softplus,
        UnaryOp::Softsign,
        UnaryOp::HardSigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Const0 => "const0",
            UnaryOp::Const1 => "const1",
            UnaryOp::Identity => "identity",
            UnaryOp::Negate => "negate",
            UnaryOp::Abs => "abs",
            UnaryOp::SafeReciprocal => "safe_reciprocal",
            UnaryOp::Square => "square",
            UnaryOp::Exp => "exp",
            UnaryOp::Expm1 => "expm1",
            UnaryOp::Erf => "erf",
            UnaryOp::Erfc => "erfc",
            UnaryOp::Sinh => "sinh",
            UnaryOp::Cosh => "cosh",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sigmoid => "sigmoid",
            UnaryOp::LogSigmoid => "log_sigmoid",
            UnaryOp::Arcsinh => "arcsinh",
            UnaryOp::Arctan => "arctan",
            UnaryOp::BesselI0e => "bessel_i0e",
            UnaryOp::BesselI1e => "bessel_i1e",
            UnaryOp::Relu => "relu",
            UnaryOp::Elu => "elu",
            UnaryOp::Selu => "selu",
            UnaryOp::Swish => "swish",
            UnaryOp::Softplus => "softplus",
            UnaryOp::Softsign => "softsign",
            UnaryOp::HardSigmoid => "hard_sigmoid",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Const0 => 0.0,
            UnaryOp::Const1 => 1.0,
            UnaryOp::Identity => x,
            UnaryOp::Negate => -x,
            UnaryOp::Abs => x.abs(),
            UnaryOp::SafeReciprocal => {
                if x == 0.0 {
                    0.0
                } else {
                    1.0 / x
                }
            }
            UnaryOp::Square => x * x,
            UnaryOp::Exp => x.exp(),
            UnaryOp::Expm1 => x.exp_m1(),
            UnaryOp::Erf => libm::erf(x),
            UnaryOp::Erfc => libm::erfc(x),
            UnaryOp::Sinh => x.sinh(),
            UnaryOp::Cosh => x.cosh(),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Sigmoid => sigmoid(x),
            UnaryOp::LogSigmoid => -softplus(-x),
            UnaryOp::Arcsinh => x.asinh(),
            UnaryOp::Arctan => x.atan(),
            UnaryOp::BesselI0e => bessel::i0e(x),
            UnaryOp::BesselI1e => bessel::i1e(x),
            UnaryOp::Relu => relu(x),
            UnaryOp::Elu => elu(x),
            UnaryOp::Selu => selu(x),
            UnaryOp::Swish => x * sigmoid(x),
            UnaryOp::Softplus => softplus(x),
            UnaryOp::Softsign => x / (1.0 + x.abs()),
            UnaryOp::HardSigmoid => hard_sigmoid(x),
        }
    }

    /// Derivative with respect to the input.
    ///
    /// Kinks use fixed one-sided choices: relu, abs and bessel_i0e report 0
    /// at 0, selu takes the right branch at 0, hard_sigmoid reports 0 on its
    /// corners, and safe_reciprocal reports 0 at its masked singularity.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            UnaryOp::Const0 | UnaryOp::Const1 => 0.0,
            UnaryOp::Identity => 1.0,
            UnaryOp::Negate => -1.0,
            UnaryOp::Abs => sign(x),
            UnaryOp::SafeReciprocal => {
                if x == 0.0 {
                    0.0
                } else {
                    -1.0 / (x * x)
                }
            }
            UnaryOp::Square => 2.0 * x,
            UnaryOp::Exp | UnaryOp::Expm1 => x.exp(),
            UnaryOp::Erf => TWO_OVER_SQRT_PI * (-x * x).exp(),
            UnaryOp::Erfc => -TWO_OVER_SQRT_PI * (-x * x).exp(),
            UnaryOp::Sinh => x.cosh(),
            UnaryOp::Cosh => x.sinh(),
            UnaryOp::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            UnaryOp::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            UnaryOp::LogSigmoid => sigmoid(-x),
            UnaryOp::Arcsinh => 1.0 / 1.0f64.hypot(x),
            UnaryOp::Arctan => 1.0 / (1.0 + x * x),
            UnaryOp::BesselI0e => bessel::i1e(x) - sign(x) * bessel::i0e(x),
            UnaryOp::BesselI1e => bessel::i1e_derivative(x),
            UnaryOp::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryOp::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    ELU_ALPHA * x.exp()
                }
            }
            UnaryOp::Selu => {
                if x >= 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp()
                }
            }
            UnaryOp::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            UnaryOp::Softplus => sigmoid(x),
            UnaryOp::Softsign => {
                let d = 1.0 + x.abs();
                1.0 / (d * d)
            }
            UnaryOp::HardSigmoid => {
                if x > -2.5 && x < 2.5 {
                    0.2
                } else {
                    0.0
                }
            }
        }
    }

    /// Points where the operator is not differentiable or is singular.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            UnaryOp::Abs | UnaryOp::SafeReciprocal | UnaryOp::BesselI0e | UnaryOp::Relu | UnaryOp::Selu => &[0.0],
            UnaryOp::HardSigmoid => &[-2.5, 2.5],
            _ => &[],
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 7] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::SafeDiv,
        BinaryOp::Pow,
        BinaryOp::Max,
        BinaryOp::Min,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::SafeDiv => "safe_div",
            BinaryOp::Pow => "pow",
            BinaryOp::Max => "max",
            BinaryOp::Min => "min",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::SafeDiv => {
                if b == 0.0 {
                    0.0
                } else {
                    a / b
                }
            }
            BinaryOp::Pow => a.powf(b),
            BinaryOp::Max => {
                if a.is_nan() || b.is_nan() {
                    f64::NAN
                } else if a >= b {
                    a
                } else {
                    b
                }
            }
            BinaryOp::Min => {
                if a.is_nan() || b.is_nan() {
                    f64::NAN
                } else if a <= b {
                    a
                } else {
                    b
                }
            }
        }
    }

    /// Partial derivatives with respect to both inputs.
    ///
    /// Ties in max/min credit the first input. safe_div reports zero partials
    /// when the denominator is zero. The exponent partial of pow uses `ln a`
    /// only for positive bases and 0 otherwise.
    pub fn partials(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            BinaryOp::Add => (1.0, 1.0),
            BinaryOp::Sub => (1.0, -1.0),
            BinaryOp::Mul => (b, a),
            BinaryOp::SafeDiv => {
                if b == 0.0 {
                    (0.0, 0.0)
                } else {
                    (1.0 / b, -a / (b * b))
                }
            }
            BinaryOp::Pow => {
                let da = b * a.powf(b - 1.0);
                let db = if a > 0.0 { a.powf(b) * a.ln() } else { 0.0 };
                (da, db)
            }
            BinaryOp::Max => {
                if a >= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            BinaryOp::Min => {
                if a <= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
        }
    }

    /// Value of `x2` that leaves `op(x1, x2) == x1` when the operator is
    /// spliced onto an edge; `None` for max/min, which take a copy of `x1`.
    pub fn neutral_operand(self) -> Option<f64> {
        match self {
            BinaryOp::Add | BinaryOp::Sub => Some(0.0),
            BinaryOp::Mul | BinaryOp::SafeDiv | BinaryOp::Pow => Some(1.0),
            BinaryOp::Max | BinaryOp::Min => None,
        }
    }
}

impl OperatorKind {
    /// All 34 operators, unary first.
    pub fn all() -> impl Iterator<Item = OperatorKind> {
        UnaryOp::ALL
            .into_iter()
            .map(OperatorKind::Unary)
            .chain(BinaryOp::ALL.into_iter().map(OperatorKind::Binary))
    }

    pub fn arity(self) -> usize {
        match self {
            OperatorKind::Unary(_) => 1,
            OperatorKind::Binary(_) => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Unary(op) => op.name(),
            OperatorKind::Binary(op) => op.name(),
        }
    }

    /// Evaluates the operator; `inputs.len()` must equal the arity.
    pub fn forward(self, inputs: &[f64]) -> f64 {
        match self {
            OperatorKind::Unary(op) => op.apply(inputs[0]),
            OperatorKind::Binary(op) => op.apply(inputs[0], inputs[1]),
        }
    }

    /// Partial derivatives, one per input.
    pub fn derivative(self, inputs: &[f64]) -> Vec<f64> {
        match self {
            OperatorKind::Unary(op) => vec![op.derivative(inputs[0])],
            OperatorKind::Binary(op) => {
                let (da, db) = op.partials(inputs[0], inputs[1]);
                vec![da, db]
            }
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperatorKind::all().find(|op| op.name() == s).ok_or(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 || x.is_nan() {
        x
    } else {
        0.0
    }
}

pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        ELU_ALPHA * x.exp_m1()
    }
}

pub fn selu(x: f64) -> f64 {
    if x >= 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn hard_sigmoid(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    (0.2 * x + 0.5).clamp(0.0, 1.0)
}

/// Sign with `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
