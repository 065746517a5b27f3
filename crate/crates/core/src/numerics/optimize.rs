//! Bracketed root finding and golden-section minimisation.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Bisection on a sign change of `f` over `[a, b]`.
///
/// Runs until the bracket is below `tol` or can no longer be split in
/// floating point. The caller guarantees `f(a)` and `f(b)` have opposite
/// signs (zero counts as either).
pub fn bisect<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Bisection on a predicate that is false at `a` and true at `b`; returns the
/// left-most point where the predicate holds, to within `tol`.
pub fn bisect_predicate<P>(pred: P, mut a: f64, mut b: f64, tol: f64) -> f64
where
    P: Fn(f64) -> bool,
{
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            break;
        }
        if pred(m) {
            b = m;
        } else {
            a = m;
        }
    }
    b
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn golden_section_min<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimum of `f` over a uniform grid of `n` points on `[a, b]`, refined by
/// golden section on the two neighbouring cells. Non-finite values are
/// skipped. Returns `None` if no grid value is finite.
pub fn grid_then_golden<F>(f: F, a: f64, b: f64, n: usize, tol: f64) -> Option<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let n = n.max(3);
    let step = (b - a) / (n - 1) as f64;
    let mut best: Option<(usize, f64)> = None;
    for k in 0..n {
        let v = f(a + k as f64 * step);
        if v.is_finite() && best.is_none_or(|(_, bv)| v < bv) {
            best = Some((k, v));
        }
    }
    let (k, v) = best?;
    let lo = a + k.saturating_sub(1) as f64 * step;
    let hi = a + (k + 1).min(n - 1) as f64 * step;
    let guarded = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            y
        } else {
            f64::INFINITY
        }
    };
    let (x, fx) = golden_section_min(guarded, lo, hi, tol);
    if fx <= v {
        Some((x, fx))
    } else {
        Some((a + k as f64 * step, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 0.0);
        assert!((r - 2f64.sqrt()).abs() < 4e-16);
    }

    #[test]
    fn predicate_bisection_finds_threshold() {
        let r = bisect_predicate(|x| x >= 0.3, 0.0, 1.0, 1e-14);
        assert!((r - 0.3).abs() < 1e-13);
    }

    #[test]
    fn golden_parabola() {
        let (x, fx) = golden_section_min(|x| (x - 0.7).powi(2) + 1.0, 0.0, 2.0, 1e-10);
        assert!((x - 0.7).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-14);
    }

    #[test]
    fn grid_golden_increasing_function_hits_left_end() {
        let (x, _) = grid_then_golden(|x| x, 1.0, 2.0, 64, 1e-12).unwrap();
        assert!((x - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grid_golden_skips_non_finite() {
        let f = |x: f64| if x < 0.5 { f64::NAN } else { (x - 0.8).powi(2) };
        let (x, _) = grid_then_golden(f, 0.0, 1.0, 101, 1e-12).unwrap();
        assert!((x - 0.8).abs() < 1e-6);
        assert!(grid_then_golden(|_| f64::NAN, 0.0, 1.0, 10, 1e-9).is_none());
    }
}
