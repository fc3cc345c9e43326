//! Reference activation functions, fixed and learnable, plus the
//! `alpha * f(beta * x)` wrapper.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::activation::ActivationFn;
use crate::graph::{sigmoid, softplus, ActivationGraph, UnaryOp};
use crate::trainer::Granularity;

/// Numerator initialization approximating Leaky ReLU with slope 0.01.
pub const PAU_NUMERATOR: [f64; 6] = [0.02979246, 0.61837738, 2.32335207, 3.05202660, 1.48548002, 0.25103717];
/// Denominator initialization, coefficients of `x^1 .. x^4`.
pub const PAU_DENOMINATOR: [f64; 4] = [1.14201226, 4.39322834, 0.87154450, 0.34720652];
/// Hinge offsets shared by the positive and negative halves.
pub const SPLASH_BREAKPOINTS: [f64; 4] = [0.0, 1.0, 2.0, 2.5];
pub const APL_HINGES: usize = 7;
pub const PRELU_INIT: f64 = 0.25;
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

const GELU_C: f64 = 0.7978845608028654;
const GELU_K: f64 = 0.044715;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Baseline {
    Relu,
    Elish,
    Elu,
    Gelu,
    HardSigmoid,
    LeakyRelu,
    Mish,
    Selu,
    Sigmoid,
    Softplus,
    Softsign,
    Swish,
    Tanh,
    Prelu,
    Pswish,
    Apl,
    Pau,
    Splash,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown baseline {name:?}; valid names: {}", valid.join(", "))]
pub struct UnknownBaseline {
    pub name: String,
    pub valid: Vec<&'static str>,
}

impl Baseline {
    pub const ALL: [Baseline; 18] = [
        Baseline::Relu,
        Baseline::Elish,
        Baseline::Elu,
        Baseline::Gelu,
        Baseline::HardSigmoid,
        Baseline::LeakyRelu,
        Baseline::Mish,
        Baseline::Selu,
        Baseline::Sigmoid,
        Baseline::Softplus,
        Baseline::Softsign,
        Baseline::Swish,
        Baseline::Tanh,
        Baseline::Prelu,
        Baseline::Pswish,
        Baseline::Apl,
        Baseline::Pau,
        Baseline::Splash,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Relu => "relu",
            Baseline::Elish => "elish",
            Baseline::Elu => "elu",
            Baseline::Gelu => "gelu",
            Baseline::HardSigmoid => "hard_sigmoid",
            Baseline::LeakyRelu => "leaky_relu",
            Baseline::Mish => "mish",
            Baseline::Selu => "selu",
            Baseline::Sigmoid => "sigmoid",
            Baseline::Softplus => "softplus",
            Baseline::Softsign => "softsign",
            Baseline::Swish => "swish",
            Baseline::Tanh => "tanh",
            Baseline::Prelu => "prelu",
            Baseline::Pswish => "pswish",
            Baseline::Apl => "apl",
            Baseline::Pau => "pau",
            Baseline::Splash => "splash",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            Baseline::Relu => "max(x, 0)",
            Baseline::Elish => "x * sigmoid(x) if x >= 0 else (e^x - 1) * sigmoid(x)",
            Baseline::Elu => "x if x >= 0 else e^x - 1",
            Baseline::Gelu => "0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))",
            Baseline::HardSigmoid => "max(0, min(1, 0.2 x + 0.5))",
            Baseline::LeakyRelu => "x if x >= 0 else 0.01 x",
            Baseline::Mish => "x * tanh(softplus(x))",
            Baseline::Selu => "1.05070098 x if x >= 0 else 1.05070098 * 1.67326324 (e^x - 1)",
            Baseline::Sigmoid => "1 / (1 + e^-x)",
            Baseline::Softplus => "log(e^x + 1)",
            Baseline::Softsign => "x / (|x| + 1)",
            Baseline::Swish => "x * sigmoid(x)",
            Baseline::Tanh => "tanh(x)",
            Baseline::Prelu => "x if x >= 0 else a x, a = 0.25",
            Baseline::Pswish => "x * sigmoid(b x), b = 1",
            Baseline::Apl => "max(0, x) + sum_s a_s max(0, b_s - x), s = 1..7",
            Baseline::Pau => "sum_j a_j x^j / (1 + |sum_k b_k x^k|), j = 0..5, k = 1..4",
            Baseline::Splash => "sum_s a+_s max(0, x - b_s) + a-_s max(0, -x - b_s), b = [0, 1, 2, 2.5]",
        }
    }

    pub fn is_learnable(self) -> bool {
        matches!(
            self,
            Baseline::Prelu | Baseline::Pswish | Baseline::Apl | Baseline::Pau | Baseline::Splash
        )
    }

    /// Parameter sharing the function was introduced with.
    pub fn default_granularity(self) -> Granularity {
        match self {
            Baseline::Prelu | Baseline::Apl => Granularity::PerNeuron,
            Baseline::Pau | Baseline::Splash => Granularity::PerLayer,
            _ => Granularity::PerChannel,
        }
    }

    /// The same function as a graph over the operator vocabulary, where one
    /// exists with parameters starting at 1.
    pub fn graph(self) -> Option<ActivationGraph> {
        let text = match self {
            Baseline::Relu => "relu(x)",
            Baseline::Elu => "elu(x)",
            Baseline::HardSigmoid => "hard_sigmoid(x)",
            Baseline::Mish => "mul(x, tanh(softplus(x)))",
            Baseline::Selu => "selu(x)",
            Baseline::Sigmoid => "sigmoid(x)",
            Baseline::Softplus => "softplus(x)",
            Baseline::Softsign => "softsign(x)",
            Baseline::Swish => "swish(x)",
            Baseline::Tanh => "tanh(x)",
            Baseline::Pswish => "mul(x, sigmoid(p0(x)))",
            _ => return None,
        };
        Some(ActivationGraph::parse(text).expect("baseline graph text is valid"))
    }

    pub fn activation(self) -> Arc<dyn ActivationFn> {
        Arc::new(Native(self))
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = UnknownBaseline;

    fn from_str(s: &str) -> Result<Self, UnknownBaseline> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == key)
            .ok_or_else(|| UnknownBaseline {
                name: s.to_string(),
                valid: Baseline::ALL.iter().map(|b| b.name()).collect(),
            })
    }
}

/// Looks a baseline up by name.
pub fn baseline(name: &str) -> Result<Baseline, UnknownBaseline> {
    name.parse()
}

fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn unary(op: UnaryOp, x: f64) -> (f64, f64) {
    (op.apply(x), op.derivative(x))
}

#[derive(Clone, Copy, Debug)]
struct Native(Baseline);

impl ActivationFn for Native {
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    fn num_params(&self) -> usize {
        match self.0 {
            Baseline::Prelu | Baseline::Pswish => 1,
            Baseline::Apl => 2 * APL_HINGES,
            Baseline::Pau => PAU_NUMERATOR.len() + PAU_DENOMINATOR.len(),
            Baseline::Splash => 2 * SPLASH_BREAKPOINTS.len(),
            _ => 0,
        }
    }

    fn initial_params(&self) -> Vec<f64> {
        match self.0 {
            Baseline::Prelu => vec![PRELU_INIT],
            Baseline::Pswish => vec![1.0],
            Baseline::Apl => {
                let mut p = vec![0.0; APL_HINGES];
                let half = (APL_HINGES / 2) as f64;
                p.extend((0..APL_HINGES).map(|s| s as f64 - half));
                p
            }
            Baseline::Pau => PAU_NUMERATOR.iter().chain(&PAU_DENOMINATOR).copied().collect(),
            Baseline::Splash => {
                let mut p = vec![0.0; 2 * SPLASH_BREAKPOINTS.len()];
                p[0] = 1.0;
                p
            }
            _ => Vec::new(),
        }
    }

    fn forward(&self, x: f64, params: &[f64]) -> f64 {
        let mut scratch = [0.0; 16];
        self.forward_grad(x, params, &mut scratch[..params.len()]).0
    }

    fn forward_grad(&self, x: f64, p: &[f64], dp: &mut [f64]) -> (f64, f64) {
        match self.0 {
            Baseline::Relu => unary(UnaryOp::Relu, x),
            Baseline::Elu => unary(UnaryOp::Elu, x),
            Baseline::HardSigmoid => unary(UnaryOp::HardSigmoid, x),
            Baseline::Selu => unary(UnaryOp::Selu, x),
            Baseline::Sigmoid => unary(UnaryOp::Sigmoid, x),
            Baseline::Softplus => unary(UnaryOp::Softplus, x),
            Baseline::Softsign => unary(UnaryOp::Softsign, x),
            Baseline::Swish => unary(UnaryOp::Swish, x),
            Baseline::Tanh => unary(UnaryOp::Tanh, x),
            Baseline::Elish => {
                let s = sigmoid(x);
                if x >= 0.0 {
                    (x * s, s + x * s * (1.0 - s))
                } else {
                    let em1 = x.exp_m1();
                    (em1 * s, x.exp() * s + em1 * s * (1.0 - s))
                }
            }
            Baseline::Gelu => {
                let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
                let v = 0.5 * x * (1.0 + t);
                let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x);
                (v, d)
            }
            Baseline::LeakyRelu => {
                if x >= 0.0 {
                    (x, 1.0)
                } else {
                    (LEAKY_RELU_SLOPE * x, LEAKY_RELU_SLOPE)
                }
            }
            Baseline::Mish => {
                let t = softplus(x).tanh();
                (x * t, t + x * (1.0 - t * t) * sigmoid(x))
            }
            Baseline::Prelu => {
                if x >= 0.0 {
                    dp[0] = 0.0;
                    (x, 1.0)
                } else {
                    dp[0] = x;
                    (p[0] * x, p[0])
                }
            }
            Baseline::Pswish => {
                let s = sigmoid(p[0] * x);
                let ds = s * (1.0 - s);
                dp[0] = x * x * ds;
                (x * s, s + x * p[0] * ds)
            }
            Baseline::Apl => {
                let (a, b) = p.split_at(APL_HINGES);
                let (da, db) = dp.split_at_mut(APL_HINGES);
                let mut v = x.max(0.0);
                let mut d = step(x);
                for s in 0..APL_HINGES {
                    let h = b[s] - x;
                    v += a[s] * h.max(0.0);
                    da[s] = h.max(0.0);
                    db[s] = a[s] * step(h);
                    d -= a[s] * step(h);
                }
                (v, d)
            }
            Baseline::Pau => {
                let (a, b) = p.split_at(PAU_NUMERATOR.len());
                let mut num = 0.0;
                let mut dnum = 0.0;
                let mut pw = 1.0;
                for (j, &aj) in a.iter().enumerate() {
                    num += aj * pw;
                    if j + 1 < a.len() {
                        dnum += (j + 1) as f64 * a[j + 1] * pw;
                    }
                    pw *= x;
                }
                let mut q = 0.0;
                let mut dq = 0.0;
                let mut pw = 1.0;
                for (k, &bk) in b.iter().enumerate() {
                    dq += (k + 1) as f64 * bk * pw;
                    pw *= x;
                    q += bk * pw;
                }
                let sq = if q > 0.0 {
                    1.0
                } else if q < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let den = 1.0 + q.abs();
                let v = num / den;
                let mut pw = 1.0;
                for j in 0..a.len() {
                    dp[j] = pw / den;
                    pw *= x;
                }
                let mut pw = x;
                for k in 0..b.len() {
                    dp[a.len() + k] = -v * sq * pw / den;
                    pw *= x;
                }
                (v, dnum / den - v * sq * dq / den)
            }
            Baseline::Splash => {
                let n = SPLASH_BREAKPOINTS.len();
                let (ap, an) = p.split_at(n);
                let mut v = 0.0;
                let mut d = 0.0;
                for (s, &b) in SPLASH_BREAKPOINTS.iter().enumerate() {
                    let hp = x - b;
                    let hn = -x - b;
                    v += ap[s] * hp.max(0.0) + an[s] * hn.max(0.0);
                    d += ap[s] * step(hp) - an[s] * step(hn);
                    dp[s] = hp.max(0.0);
                    dp[n + s] = hn.max(0.0);
                }
                (v, d)
            }
        }
    }
}

/// `alpha * inner(beta * x)` with parameters `[alpha, beta, inner...]`.
pub struct Scaled {
    inner: Arc<dyn ActivationFn>,
}

pub fn wrap_scaled(inner: Arc<dyn ActivationFn>) -> Scaled {
    Scaled { inner }
}

impl ActivationFn for Scaled {
    fn name(&self) -> String {
        format!("alpha*{}(beta*x)", self.inner.name())
    }

    fn num_params(&self) -> usize {
        2 + self.inner.num_params()
    }

    fn initial_params(&self) -> Vec<f64> {
        let mut p = vec![1.0, 1.0];
        p.extend(self.inner.initial_params());
        p
    }

    fn forward(&self, x: f64, params: &[f64]) -> f64 {
        params[0] * self.inner.forward(params[1] * x, &params[2..])
    }

    fn forward_grad(&self, x: f64, params: &[f64], dparams: &mut [f64]) -> (f64, f64) {
        let (alpha, beta) = (params[0], params[1]);
        let (head, rest) = dparams.split_at_mut(2);
        let (v, d) = self.inner.forward_grad(beta * x, &params[2..], rest);
        for g in rest.iter_mut() {
            *g *= alpha;
        }
        head[0] = v;
        head[1] = alpha * d * x;
        (alpha * v, alpha * d * beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::GraphActivation;
    use crate::graph::ParamValues;

    fn f(b: Baseline, x: f64) -> f64 {
        let act = b.activation();
        act.forward(x, &act.initial_params())
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn selu_at_one() {
        assert_eq!(f(Baseline::Selu, 1.0), 1.05070098);
    }

    #[test]
    fn learnable_initial_values() {
        assert_eq!(Baseline::Prelu.activation().initial_params(), vec![0.25]);
        let pau = Baseline::Pau.activation().initial_params();
        assert_eq!(
            &pau[..6],
            &[0.02979246, 0.61837738, 2.32335207, 3.05202660, 1.48548002, 0.25103717]
        );
        assert_eq!(&pau[6..], &[1.14201226, 4.39322834, 0.87154450, 0.34720652]);
        assert_eq!(SPLASH_BREAKPOINTS, [0.0, 1.0, 2.0, 2.5]);
        let splash = Baseline::Splash.activation().initial_params();
        assert_eq!(splash, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(Baseline::Apl.activation().num_params(), 14);
    }

    #[test]
    fn splash_starts_as_relu() {
        for x in [-3.0, -1.0, 0.0, 0.5, 2.2, 7.0] {
            assert_eq!(f(Baseline::Splash, x), x.max(0.0));
        }
    }

    #[test]
    fn apl_starts_as_relu() {
        for x in [-3.0, -0.5, 0.0, 2.0] {
            assert_eq!(f(Baseline::Apl, x), x.max(0.0));
        }
    }

    #[test]
    fn pau_approximates_leaky_relu() {
        for x in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
            let want = if x >= 0.0 { x } else { 0.01 * x };
            assert!((f(Baseline::Pau, x) - want).abs() < 0.05, "x = {x}");
        }
    }

    /// Three hand-computed values per fixed function, in increasing x.
    #[test]
    fn fixed_point_values() {
        let e = std::f64::consts::E;
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let table: Vec<(Baseline, [(f64, f64); 3])> = vec![
            (Baseline::Relu, [(-1.0, 0.0), (0.0, 0.0), (2.0, 2.0)]),
            (
                Baseline::Elish,
                [(-1.0, (1.0 / e - 1.0) * sig(-1.0)), (0.0, 0.0), (1.0, sig(1.0))],
            ),
            (Baseline::Elu, [(-1.0, 1.0 / e - 1.0), (0.0, 0.0), (3.0, 3.0)]),
            (
                Baseline::Gelu,
                [(-1.0, -0.15880800939172324), (0.0, 0.0), (1.0, 0.8411919906082768)],
            ),
            (Baseline::HardSigmoid, [(-3.0, 0.0), (0.0, 0.5), (1.0, 0.7)]),
            (Baseline::LeakyRelu, [(-2.0, -0.02), (0.0, 0.0), (2.0, 2.0)]),
            (
                Baseline::Mish,
                [(-1.0, -0.30340146137410895), (0.0, 0.0), (1.0, 0.8650983882673103)],
            ),
            (
                Baseline::Selu,
                [
                    (-1.0, 1.05070098 * 1.67326324 * (1.0 / e - 1.0)),
                    (0.0, 0.0),
                    (1.0, 1.05070098),
                ],
            ),
            (
                Baseline::Sigmoid,
                [(-1.0, 1.0 / (1.0 + e)), (0.0, 0.5), (1.0, e / (1.0 + e))],
            ),
            (
                Baseline::Softplus,
                [(-1.0, (1.0 + 1.0 / e).ln()), (0.0, 2f64.ln()), (1.0, (1.0 + e).ln())],
            ),
            (Baseline::Softsign, [(-1.0, -0.5), (0.0, 0.0), (3.0, 0.75)]),
            (
                Baseline::Swish,
                [(-1.0, -1.0 / (1.0 + e)), (0.0, 0.0), (1.0, e / (1.0 + e))],
            ),
            (
                Baseline::Tanh,
                [(-1.0, -0.7615941559557649), (0.0, 0.0), (1.0, 0.7615941559557649)],
            ),
        ];
        for (b, points) in table {
            for (x, want) in points {
                assert!(close(f(b, x), want, 1e-12), "{b}({x}) = {} want {want}", f(b, x));
            }
        }
    }

    #[test]
    fn graph_forms_agree() {
        for b in Baseline::ALL {
            let Some(g) = b.graph() else { continue };
            let act = b.activation();
            let p = ParamValues::for_graph(&g);
            for i in -40..=40 {
                let x = i as f64 * 0.137;
                assert!(
                    close(g.eval(&p, x), act.forward(x, &act.initial_params()), 1e-12),
                    "{b} at {x}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_differences() {
        let h = 1e-6;
        for b in Baseline::ALL {
            let act = b.activation();
            let mut p = act.initial_params();
            for (i, v) in p.iter_mut().enumerate() {
                *v += 0.05 * (i as f64 + 1.0);
            }
            for x in [-2.3, -0.7, 0.3, 1.1, 2.9] {
                let mut dp = vec![0.0; p.len()];
                let (_, dx) = act.forward_grad(x, &p, &mut dp);
                let fd = (act.forward(x + h, &p) - act.forward(x - h, &p)) / (2.0 * h);
                assert!(close(dx, fd, 1e-5), "{b} dx at {x}: {dx} vs {fd}");
                for j in 0..p.len() {
                    let mut hi = p.clone();
                    let mut lo = p.clone();
                    hi[j] += h;
                    lo[j] -= h;
                    let fd = (act.forward(x, &hi) - act.forward(x, &lo)) / (2.0 * h);
                    assert!(close(dp[j], fd, 1e-5), "{b} dp{j} at {x}: {} vs {fd}", dp[j]);
                }
            }
        }
    }

    #[test]
    fn unknown_name_lists_choices() {
        let e = baseline("relu6").unwrap_err();
        assert!(e.to_string().contains("splash"));
        assert_eq!(baseline("Leaky-ReLU"), Ok(Baseline::LeakyRelu));
    }

    #[test]
    fn scaled_identity_at_start() {
        let s = wrap_scaled(Baseline::Relu.activation());
        let p = s.initial_params();
        assert_eq!(p, vec![1.0, 1.0]);
        for x in [-2.0, 0.0, 0.5, 3.0] {
            assert_eq!(s.forward(x, &p), x.max(0.0));
        }
    }

    #[test]
    fn scaled_swish() {
        let s = wrap_scaled(Baseline::Swish.activation());
        let (a, b, x) = (1.5, 0.7, -1.3);
        let want = a * (b * x) * sig(b * x);
        assert!(close(s.forward(x, &[a, b]), want, 1e-15));
        fn sig(x: f64) -> f64 {
            1.0 / (1.0 + (-x).exp())
        }
    }

    #[test]
    fn scaled_alpha_gradient_is_inner_value() {
        let s = wrap_scaled(Baseline::Tanh.activation());
        let mut dp = [0.0; 2];
        s.forward_grad(0.8, &[2.0, 0.5], &mut dp);
        assert_eq!(dp[0], (0.4f64).tanh());
    }

    #[test]
    fn scaled_wraps_graphs_and_learnables() {
        let g = ActivationGraph::parse("mul(x, p0(erf(x)))").unwrap();
        let s = wrap_scaled(Arc::new(GraphActivation::new(g)));
        assert_eq!(s.num_params(), 3);
        let s = wrap_scaled(Baseline::Pau.activation());
        assert_eq!(s.num_params(), 12);
    }
}
