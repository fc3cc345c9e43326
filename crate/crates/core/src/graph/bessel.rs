//! Exponentially scaled modified Bessel functions of order 0 and 1.
//!
//! Small and moderate arguments use the ascending power series, which has
//! only positive terms and therefore no cancellation. Large arguments use the
//! Hankel asymptotic expansion, truncated at its smallest term.

const SERIES_LIMIT: f64 = 30.0;

/// `e^{-|x|} I0(x)`.
pub fn i0e(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    if ax.is_infinite() {
        return 0.0;
    }
    if ax <= SERIES_LIMIT {
        series(ax, 0) * (-ax).exp()
    } else {
        asymptotic(ax, 0)
    }
}

/// `e^{-|x|} I1(x)`; odd in `x`.
pub fn i1e(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    if ax.is_infinite() {
        return 0.0f64.copysign(x);
    }
    let v = if ax <= SERIES_LIMIT {
        series(ax, 1) * (-ax).exp()
    } else {
        asymptotic(ax, 1)
    };
    v.copysign(x)
}

/// `d/dx i1e(x) = i0e(x) - i1e(x)/x - sign(x) i1e(x)`, with the limit 1/2 at 0.
pub fn i1e_derivative(x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let i1 = i1e(x);
    i0e(x) - i1 / x - x.signum() * i1
}

/// `sum_k (x/2)^(2k+nu) / (k! (k+nu)!)` for `x >= 0`.
fn series(x: f64, nu: u32) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let mut term = if nu == 0 { 1.0 } else { half };
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + f64::from(nu)));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `1/sqrt(2 pi x) * sum_k (-1)^k prod_{j=1..k} (4nu^2 - (2j-1)^2) / (k! (8x)^k)`.
fn asymptotic(x: f64, nu: u32) -> f64 {
    let mu = 4.0 * f64::from(nu * nu);
    let mut term = 1.0f64;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = f64::from(k);
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (kf * 8.0 * x);
        if term.abs() >= prev {
            break;
        }
        prev = term.abs();
        sum += term;
        if term.abs() <= sum.abs() * 1e-17 {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trapezoidal rule on `(1/pi) int_0^pi exp(x (cos t - 1)) cos(nu t) dt`.
    /// The integrand is smooth and periodic, so the rule converges spectrally.
    fn quadrature(x: f64, nu: u32) -> f64 {
        let ax = x.abs();
        let n = 4000;
        let h = std::f64::consts::PI / n as f64;
        let mut sum = 0.0;
        for i in 0..=n {
            let t = i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            sum += w * (ax * (t.cos() - 1.0)).exp() * (f64::from(nu) * t).cos();
        }
        let v = sum * h / std::f64::consts::PI;
        if nu == 1 {
            v.copysign(x)
        } else {
            v
        }
    }

    #[test]
    fn matches_quadrature_oracle() {
        let mut x = -60.0;
        while x <= 60.0 {
            assert!((i0e(x) - quadrature(x, 0)).abs() < 1e-12, "i0e({x})");
            assert!((i1e(x) - quadrature(x, 1)).abs() < 1e-12, "i1e({x})");
            x += 0.37;
        }
    }

    #[test]
    fn branches_agree_at_the_switch() {
        let x = SERIES_LIMIT;
        for nu in [0, 1] {
            let s = series(x, nu) * (-x).exp();
            assert!((s - asymptotic(x, nu)).abs() < 1e-14, "order {nu}");
        }
    }

    #[test]
    fn reference_points() {
        assert_eq!(i0e(0.0), 1.0);
        assert_eq!(i1e(0.0), 0.0);
        // e^-1 I0(1) and e^-1 I1(1)
        assert!((i0e(1.0) - 0.465_759_607_593_640_4).abs() < 1e-15);
        assert!((i1e(1.0) - 0.207_910_415_349_708_5).abs() < 1e-15);
        assert_eq!(i0e(f64::INFINITY), 0.0);
        assert!(i0e(f64::NAN).is_nan());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &x in &[-7.5, -1.2, -0.3, 0.4, 2.0, 9.0, 35.0] {
            let h = 1e-5;
            let fd = (i1e(x + h) - i1e(x - h)) / (2.0 * h);
            assert!((i1e_derivative(x) - fd).abs() < 1e-8, "x = {x}");
        }
        // i1e(x) = x/2 - x|x|/2 + ..., so the central difference is off by h/2 at 0.
        let h = 1e-9;
        assert!((i1e_derivative(0.0) - (i1e(h) - i1e(-h)) / (2.0 * h)).abs() < 1e-8);
    }
}
