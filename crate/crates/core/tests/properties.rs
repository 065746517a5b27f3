use std::sync::Arc;

use proptest::prelude::*;
use resonance_core::analysis::{admissible_h, quality_exponent, resonance_interval, transition_phase};
use resonance_core::chain::{ChainParams, TwoStateChain};
use resonance_core::numerics::stats::wilson_interval;
use resonance_core::{reduce_phase, DepthProfile, ExamplePotential, Potential, Well};

fn example(psi: f64) -> (Arc<dyn Potential>, DepthProfile) {
    let p: Arc<dyn Potential> = Arc::new(ExamplePotential::new(psi).unwrap());
    let profile = DepthProfile::from_potential(p.clone()).unwrap();
    (p, profile)
}

fn well() -> impl Strategy<Value = Well> {
    prop_oneof![Just(Well::Minus), Just(Well::Plus)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_periodic(t in -3.0..3.0f64, x in -2.5..2.5f64, psi in 0.0..0.249f64) {
        let p = ExamplePotential::new(psi).unwrap();
        let e = resonance_core::eval_potential(&p, t, x).unwrap();
        let e1 = resonance_core::eval_potential(&p, t + 1.0, x).unwrap();
        prop_assert!((e - e1).abs() <= 1e-9 * e.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_difference_quotient(t in 0.0..1.0f64, x in prop_oneof![-2.5..-0.01f64, 0.01..2.5f64]) {
        let p = ExamplePotential::new(0.1).unwrap();
        let dx = 1e-6;
        let fd = (p.energy(t, x + dx) - p.energy(t, x - dx)) / (2.0 * dx);
        let g = p.gradient(t, x);
        prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "fd {} vs {}", fd, g);
    }

    #[test]
    fn reduced_phase_is_in_unit_interval(t in -1e6..1e6f64) {
        let r = reduce_phase(t);
        prop_assert!((0.0..1.0).contains(&r));
        prop_assert!(((t - r) - (t - r).round()).abs() < 1e-6);
    }

    #[test]
    fn transition_phase_is_first_entry(u in 0.001..0.999f64, w in well(), psi in 0.0..0.2f64) {
        let (_, profile) = example(psi);
        let b = resonance_interval(&profile);
        let mu = b.lower + u * (b.upper - b.lower);
        let a = transition_phase(&profile, w, mu, 0.0).unwrap();
        prop_assert!((profile.depth(w, a) - mu).abs() <= 1e-9);
        for k in 0..200 {
            let t = a * k as f64 / 200.0;
            prop_assert!(profile.depth(w, t) > mu - 1e-12);
        }
    }

    #[test]
    fn transition_phase_decreases_in_mu(u1 in 0.0..1.0f64, u2 in 0.0..1.0f64, w in well()) {
        let (_, profile) = example(0.0);
        let b = resonance_interval(&profile);
        let (lo, hi) = b.interior(1e-3);
        let (m1, m2) = (lo + u1.min(u2) * (hi - lo), lo + u1.max(u2) * (hi - lo));
        let a1 = transition_phase(&profile, w, m1, 0.0).unwrap();
        let a2 = transition_phase(&profile, w, m2, 0.0).unwrap();
        prop_assert!(a2 <= a1 + 1e-12);
    }

    #[test]
    fn quality_exponent_is_negative_below_admissible_h(u in 0.0..1.0f64, frac in 0.05..0.95f64) {
        let (_, profile) = example(0.0);
        let (lo, hi) = resonance_interval(&profile).interior(0.05);
        let h0 = admissible_h(&profile, lo, hi, 64).unwrap();
        let mu = lo + u * (hi - lo);
        let q = quality_exponent(&profile, mu, frac * h0).unwrap();
        prop_assert!(q.value < 0.0);
        prop_assert!(!q.clipped);
    }

    #[test]
    fn shifted_profile_keeps_depth_range(s in 0.0..1.0f64, w in well()) {
        let (_, profile) = example(0.1);
        let shifted = profile.shifted(s).unwrap();
        let (a, b) = (profile.extrema(w), shifted.extrema(w));
        prop_assert!((a.inf - b.inf).abs() < 1e-10 && (a.sup - b.sup).abs() < 1e-10);
        let ra = resonance_interval(&profile);
        let rb = resonance_interval(&shifted);
        prop_assert!((ra.lower - rb.lower).abs() < 1e-10 && (ra.upper - rb.upper).abs() < 1e-10);
    }

    #[test]
    fn survival_decreases_in_time(t1 in 0.0..50.0f64, dt in 0.0..50.0f64, w in well()) {
        let (_, profile) = example(0.0);
        let chain = TwoStateChain::new(&profile, ChainParams::new(0.2, 0.28, 0.05)).unwrap();
        let s1 = chain.survival(w, t1).unwrap();
        let s2 = chain.survival(w, t1 + dt).unwrap();
        prop_assert!(s2 <= s1);
        prop_assert!((0.0..=1.0).contains(&s2));
    }

    #[test]
    fn wider_window_is_more_likely(h1 in 0.001..0.2f64, dh in 0.0..0.2f64, w in well(), eps in 0.08..0.4f64) {
        let (_, profile) = example(0.0);
        let mu = 0.27;
        let narrow = TwoStateChain::new(&profile, ChainParams::new(eps, mu, h1)).unwrap();
        let wide = TwoStateChain::new(&profile, ChainParams::new(eps, mu, (h1 + dh).min(0.49))).unwrap();
        prop_assert!(wide.window_probability(w).unwrap() >= narrow.window_probability(w).unwrap() - 1e-13);
    }

    #[test]
    fn hazard_is_additive_over_periods(tau in 0.0..1.0f64, n in 0u32..20, w in well()) {
        let (_, profile) = example(0.0);
        let chain = TwoStateChain::new(&profile, ChainParams::new(0.15, 0.3, 0.05)).unwrap();
        let g = chain.rescaled_hazard(w, tau + n as f64).unwrap();
        let expected = chain.rescaled_hazard(w, tau).unwrap() + n as f64 * chain.period_integral(w);
        prop_assert!((g - expected).abs() <= 1e-10 * g.max(1.0));
    }

    #[test]
    fn wilson_interval_is_valid(n in 1usize..5000, frac in 0.0..=1.0f64) {
        let k = ((n as f64) * frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n, 0.95);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}
