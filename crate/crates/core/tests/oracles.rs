//! Independent closed-form and brute-force references.

use std::f64::consts::PI;
use std::sync::Arc;

use resonance_core::analysis::{quality_exponent, resonance_interval, transition_phase};
use resonance_core::chain::{ChainParams, TwoStateChain};
use resonance_core::spectral::{freeze, principal_eigenvalue, FreezeMode};
use resonance_core::{depth, eval_potential, DepthProfile, ExamplePotential, Potential, Well};

const M: f64 = 1.0 / 3.0;
const A: f64 = 2.0 / 15.0;

fn example() -> Arc<dyn Potential> {
    Arc::new(ExamplePotential::new(0.0).unwrap())
}

#[test]
fn example_energy_fixture() {
    let p = ExamplePotential::new(0.0).unwrap();
    // c = cos(0) = 1 at t = 1/4.
    assert!((eval_potential(&p, 0.25, 1.0).unwrap() - (-0.2)).abs() < 1e-15);
    assert!((eval_potential(&p, 0.25, -1.0).unwrap() - (-7.0 / 15.0)).abs() < 1e-15);
    assert_eq!(eval_potential(&p, 0.25, 0.0).unwrap(), 0.0);
}

#[test]
fn example_depths_at_quarter_phases() {
    let p = ExamplePotential::new(0.0).unwrap();
    let plus = [1.0 / 3.0, 0.2, 1.0 / 3.0, 7.0 / 15.0];
    let minus = [1.0 / 3.0, 7.0 / 15.0, 1.0 / 3.0, 0.2];
    for (k, t) in [0.0, 0.25, 0.5, 0.75].into_iter().enumerate() {
        assert!((depth(&p, Well::Plus, t).unwrap() - plus[k]).abs() < 1e-14, "t = {t}");
        assert!((depth(&p, Well::Minus, t).unwrap() - minus[k]).abs() < 1e-14, "t = {t}");
    }
}

#[test]
fn example_depths_with_phase_offset() {
    let psi = 0.1;
    let p = ExamplePotential::new(psi).unwrap();
    for k in 0..64 {
        let t = k as f64 / 64.0;
        let d1 = M - A * (2.0 * PI * (t - 0.25 + psi)).cos();
        let dm = M + A * (2.0 * PI * (t - 0.25 - psi)).cos();
        assert!((depth(&p, Well::Plus, t).unwrap() - d1).abs() < 1e-14);
        assert!((depth(&p, Well::Minus, t).unwrap() - dm).abs() < 1e-14);
    }
    let profile = DepthProfile::from_potential(Arc::new(p)).unwrap();
    assert!((profile.phase_shift().unwrap() - (0.5 - 2.0 * psi)).abs() < 1e-9);
}

#[test]
fn resonance_interval_of_example() {
    let b = resonance_interval(&DepthProfile::from_potential(example()).unwrap());
    assert!((b.lower - 0.2).abs() < 1e-12);
    assert!((b.upper - M).abs() < 1e-12);
}

#[test]
fn quality_exponent_table_matches_closed_form() {
    let profile = DepthProfile::from_potential(example()).unwrap();
    let h = 0.05;
    let (lo, hi) = resonance_interval(&profile).interior(1e-3);
    for k in 0..50 {
        let mu = lo + (hi - lo) * k as f64 / 49.0;
        let a = ((M - mu) / A).asin() / (2.0 * PI);
        let f = mu - M + A * (2.0 * PI * (a - h)).sin();
        let q = quality_exponent(&profile, mu, h).unwrap();
        assert!((q.value - f).abs() < 1e-9, "mu = {mu}: {} vs {f}", q.value);
        assert!((q.per_well[0] - q.per_well[1]).abs() < 1e-9);
        let a_minus = transition_phase(&profile, Well::Minus, mu, 0.0).unwrap();
        assert!((a_minus - a - 0.5).abs() < 1e-9);
    }
}

#[test]
fn integrated_hazard_matches_dense_trapezoid() {
    let profile = DepthProfile::from_potential(example()).unwrap();
    let (eps, mu) = (0.12, 0.3);
    let chain = TwoStateChain::new(&profile, ChainParams::new(eps, mu, 0.05)).unwrap();
    let rate = |u: f64| ((mu - profile.depth(Well::Minus, u)) / eps).exp();
    for tau in [0.37, 2.6] {
        let n = 1_000_000;
        let dx = tau / n as f64;
        let mut s = 0.5 * (rate(0.0) + rate(tau));
        for k in 1..n {
            s += rate(k as f64 * dx);
        }
        let trap = s * dx;
        let got = chain.rescaled_hazard(Well::Minus, tau).unwrap();
        assert!((got - trap).abs() <= 1e-9 * trap, "{got} vs {trap}");
        let real = chain.integrated_hazard(Well::Minus, tau * chain.period()).unwrap();
        assert!((real - got).abs() <= 1e-12 * got);
    }
}

/// Mean exit time from -1 for reflection at `left` and absorption at `d`:
/// `T = (1/eps) int_{-1}^d e^{Q(y)/eps} int_left^y e^{-Q(z)/eps} dz dy`.
fn mean_exit_time(q: impl Fn(f64) -> f64, left: f64, d: f64, eps: f64) -> f64 {
    let n = 200_000;
    let dx = (d - left) / n as f64;
    let start = ((-1.0 - left) / dx).round() as usize;
    let mut inner = 0.0;
    let mut prev = (-q(left) / eps).exp();
    let mut total = 0.0;
    let mut outer_prev: Option<f64> = None;
    for k in 1..=n {
        let y = left + k as f64 * dx;
        let cur = (-q(y) / eps).exp();
        inner += 0.5 * (prev + cur) * dx;
        prev = cur;
        if k >= start {
            let f = (q(y) / eps).exp() * inner;
            if let Some(fp) = outer_prev {
                total += 0.5 * (fp + f) * dx;
            }
            outer_prev = Some(f);
        }
    }
    total / eps
}

#[test]
fn eigenvalue_matches_mean_exit_time_integral() {
    let p = example();
    let (left, d, eps) = (-2.0, 0.5, 0.1);
    let fp = freeze(p.clone(), FreezeMode::At { t: 0.0 }, (left, d)).unwrap();
    let r = principal_eigenvalue(&fp, eps, fp.auto_grid(eps)).unwrap();
    let q = |x: f64| p.energy(0.0, x);
    let t = mean_exit_time(q, left, d, eps);
    // Discrete and continuous mean exit times agree to discretisation error.
    assert!((r.mean_exit_time - t).abs() <= 2e-3 * t, "{} vs {t}", r.mean_exit_time);
    // Metastability: lambda T = 1 up to exponentially small terms.
    let product = r.lambda * t;
    assert!((product - 1.0).abs() < 0.05, "lambda T = {product}");
}
