#![allow(dead_code)]

use actsearch::evolve::{init_random, mutate, parameterize};
use actsearch::seed::{rng_from, Rng};
use actsearch::{ActivationGraph, EvalError, FitnessRecord, ParamValues};
use rand::Rng as _;

/// A random initialization, up to a dozen mutations, then parameters.
pub fn random_graph(seed: u64) -> ActivationGraph {
    let mut rng = rng_from(seed);
    random_graph_with(&mut rng)
}

pub fn random_graph_with(rng: &mut Rng) -> ActivationGraph {
    let mut g = init_random(rng);
    for _ in 0..rng.random_range(0..12) {
        g = mutate(&g, rng).0;
    }
    parameterize(&g, rng)
}

pub fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

/// Five-point central difference.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// `|a - n| / max(|a|, |n|, 1)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compares `eval_grad` with differences in `x` and in every parameter.
/// `None` when some value near `x` is not finite.
pub fn graph_gradient_error(g: &ActivationGraph, params: &ParamValues, x: f64) -> Option<f64> {
    let (v, dx, dp) = g.eval_grad(params, x);
    if !v.is_finite() || !dx.is_finite() || dp.iter().any(|d| !d.is_finite()) {
        return None;
    }
    let h = 1e-5 * x.abs().max(1.0);
    let eval = |x: f64| g.eval(params, x);
    let stencil = [x - 2.0 * h, x - h, x + h, x + 2.0 * h];
    if stencil.iter().any(|&s| !eval(s).is_finite()) {
        return None;
    }
    let mut worst = relative_error(dx, central_difference(eval, x, h));
    for i in 0..params.len() {
        let p0 = params.as_slice()[i];
        let hp = 1e-5 * p0.abs().max(1.0);
        let at = |p: f64| {
            let mut q = params.clone();
            q.as_mut_slice()[i] = p;
            g.eval(&q, x)
        };
        if [p0 - 2.0 * hp, p0 - hp, p0 + hp, p0 + 2.0 * hp]
            .iter()
            .any(|&p| !at(p).is_finite())
        {
            return None;
        }
        worst = worst.max(relative_error(dp[i], central_difference(at, p0, hp)));
    }
    Some(worst)
}

/// Fitness from a hash of the expression and the seed.
pub fn mock(g: &ActivationGraph, seed: u64) -> Result<FitnessRecord, EvalError> {
    let text = g.to_text();
    let h = text
        .bytes()
        .chain(seed.to_le_bytes())
        .fold(0xcbf29ce484222325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x100000001b3)
        });
    Ok(FitnessRecord::ok((h % 1000) as f64 / 1000.0, 0.0))
}
