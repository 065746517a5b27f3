//! Adaptive Simpson and composite Gauss-Legendre quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
const MAX_EVALS: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Accumulated Richardson error estimate.
    pub error: f64,
}

/// Adaptive Simpson rule with absolute tolerance `tol`.
///
/// Each accepted panel carries the Richardson correction `(S2 - S1) / 15`.
/// Fails with [`Error::Quadrature`] when the recursion bottoms out before the
/// local criterion is met.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let m = 0.5 * (lo + hi);
    let (fa, fm, fb) = (f(lo), f(m), f(hi));
    let whole = (hi - lo) * (fa + 4.0 * fm + fb) / 6.0;
    let mut state = Accum { error: 0.0, failed: false, evals: 3 };
    let value = recurse(&f, lo, hi, fa, fm, fb, whole, tol.max(f64::MIN_POSITIVE), MAX_DEPTH, &mut state);
    if state.failed {
        return Err(Error::Quadrature { achieved: state.error, requested: tol });
    }
    Ok(Quadrature { value: sign * value, error: state.error })
}

/// Adaptive Simpson with a tolerance relative to a coarse estimate of the
/// integral of a non-negative integrand.
pub fn adaptive_simpson_rel<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    // 17-point trapezoid for scale only.
    let n = 16;
    let step = (b - a) / n as f64;
    let mut scale = 0.5 * (f(a).abs() + f(b).abs());
    for k in 1..n {
        scale += f(a + k as f64 * step).abs();
    }
    scale *= step.abs();
    if scale == 0.0 {
        scale = f64::MIN_POSITIVE;
    }
    adaptive_simpson(f, a, b, rel_tol * scale)
}

struct Accum {
    error: f64,
    failed: bool,
    evals: usize,
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    acc: &mut Accum,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    acc.evals += 2;
    let left = (m - a) * (fa + 4.0 * flm + fm) / 6.0;
    let right = (b - m) * (fm + 4.0 * frm + fb) / 6.0;
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || !(lm > a && rm < b) {
        acc.error += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    if depth == 0 || acc.evals > MAX_EVALS {
        acc.error += delta.abs() / 15.0;
        acc.failed = true;
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, acc)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, acc)
}

const GL5_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Composite five-point Gauss-Legendre rule on `panels` equal panels.
pub fn gauss_legendre<F>(f: F, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let half = 0.5 * width;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let mut s = 0.0;
        for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
            s += w * f(mid + half * x);
        }
        total += s * half;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erf;
    use std::f64::consts::PI;

    #[test]
    fn simpson_polynomial_is_exact() {
        let q = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((q.value - 0.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_handles_reversed_limits() {
        let q = adaptive_simpson(f64::sin, PI, 0.0, 1e-12).unwrap();
        assert!((q.value + 2.0).abs() < 1e-10);
    }

    #[test]
    fn simpson_relative_on_peaked_integrand() {
        let eps = 0.01;
        let q = adaptive_simpson_rel(|x: f64| (-(x - 0.3).powi(2) / eps).exp(), 0.0, 1.0, 1e-10).unwrap();
        let s = eps.sqrt();
        let exact = 0.5 * (PI * eps).sqrt() * (erf(0.7 / s) + erf(0.3 / s));
        assert!((q.value - exact).abs() / exact < 1e-9, "{}", q.value);
    }

    #[test]
    fn simpson_reports_non_convergence() {
        let err = adaptive_simpson(|x: f64| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, 1e-300).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }

    #[test]
    fn gauss_legendre_exponential() {
        let v = gauss_legendre(f64::exp, 0.0, 1.0, 4);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
    }
}
