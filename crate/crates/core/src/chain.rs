//! Reduced two-state Markov chain with hazards `exp(-D_i(t/T)/eps)`.
//!
//! Real time `t` and rescaled time `tau = t/T` (period units) are related by
//! `T = exp(mu/eps)`. The cumulative hazard is tabulated in rescaled time,
//!
//! ```text
//! Lambda_i(t) = G_i(t/T),   G_i(tau) = int_0^tau exp((mu - D_i(u)) / eps) du,
//! ```
//!
//! with one period integrated once and reused for whole periods.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{quality_exponent, transition_crossing, CrossingKind};
use crate::error::{finite, Error, Result};
use crate::numerics::quad::adaptive_simpson_rel;
use crate::numerics::seed::{derive_seed, sample_rng};
use crate::potential::{DepthProfile, Well};

const PANELS: usize = 256;
const STREAM_INVERSE: u64 = 0xC4A1;
const STREAM_THINNING: u64 = 0xC4A2;
const STREAM_SPIKES: u64 = 0xC4A3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainParams {
    pub eps: f64,
    pub mu: f64,
    pub h: f64,
    /// Relative tolerance of each panel quadrature.
    pub rel_tol: f64,
}

impl ChainParams {
    pub fn new(eps: f64, mu: f64, h: f64) -> Self {
        Self { eps, mu, h, rel_tol: 1e-11 }
    }

    pub fn period(&self) -> f64 {
        (self.mu / self.eps).exp()
    }

    fn validate(&self) -> Result<()> {
        finite("eps", self.eps)?;
        finite("mu", self.mu)?;
        finite("h", self.h)?;
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps = {} must be positive", self.eps)));
        }
        if !(self.h >= 0.0 && self.h < 0.5) {
            return Err(Error::InvalidParameter(format!("h = {} outside [0, 1/2)", self.h)));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-3) {
            return Err(Error::InvalidParameter(format!("quadrature tolerance {} outside (0, 1e-3)", self.rel_tol)));
        }
        Ok(())
    }
}

/// Transition window of one well, in period units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub a_mu: f64,
    pub lo: f64,
    pub hi: f64,
    /// `a_mu - h < 0`, so `lo` was moved to 0.
    pub clipped: bool,
}

#[derive(Debug, Clone)]
struct HazardTable {
    /// `cum[k] = G(k / PANELS)`.
    cum: Vec<f64>,
}

/// The chain for one `(eps, mu, h)` and depth profile.
#[derive(Debug, Clone)]
pub struct TwoStateChain {
    profile: DepthProfile,
    params: ChainParams,
    tables: [HazardTable; 2],
    windows: [Window; 2],
    /// Upper bound of the rescaled hazards, `exp((mu - inf D_i)/eps)`.
    bounds: [f64; 2],
}

impl TwoStateChain {
    pub fn new(profile: &DepthProfile, params: ChainParams) -> Result<Self> {
        params.validate()?;
        let mut windows = [Window { a_mu: 0.0, lo: 0.0, hi: 0.0, clipped: false }; 2];
        let mut bounds = [0.0; 2];
        for well in Well::BOTH {
            let c = transition_crossing(profile, well, params.mu, 0.0)?;
            if c.kind == CrossingKind::Never {
                return Err(Error::NeverCrosses { well, mu: params.mu });
            }
            let lo = c.phase - params.h;
            windows[well.index()] = Window { a_mu: c.phase, lo: lo.max(0.0), hi: c.phase + params.h, clipped: lo < 0.0 };
            bounds[well.index()] = ((params.mu - profile.extrema(well).inf) / params.eps).exp() * (1.0 + 1e-9);
        }
        let mut chain = Self {
            profile: profile.clone(),
            params,
            tables: [HazardTable { cum: Vec::new() }, HazardTable { cum: Vec::new() }],
            windows,
            bounds,
        };
        for well in Well::BOTH {
            let mut cum = Vec::with_capacity(PANELS + 1);
            cum.push(0.0);
            let mut acc = 0.0;
            for k in 0..PANELS {
                let (a, b) = (k as f64 / PANELS as f64, (k + 1) as f64 / PANELS as f64);
                acc += adaptive_simpson_rel(|u| chain.rate(well, u), a, b, params.rel_tol)?.value;
                cum.push(acc);
            }
            chain.tables[well.index()] = HazardTable { cum };
        }
        Ok(chain)
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn period(&self) -> f64 {
        self.params.period()
    }

    pub fn window(&self, well: Well) -> Window {
        self.windows[well.index()]
    }

    /// Hazard in rescaled time, `T exp(-D_i(tau)/eps)`.
    #[inline]
    pub fn rate(&self, well: Well, tau: f64) -> f64 {
        ((self.params.mu - self.profile.depth(well, tau)) / self.params.eps).exp()
    }

    /// Hazard in real time, `exp(-D_i(t/T)/eps)`.
    pub fn hazard(&self, well: Well, t: f64) -> f64 {
        (-self.profile.depth(well, t / self.period()) / self.params.eps).exp()
    }

    /// `int_0^1` of the rescaled hazard.
    pub fn period_integral(&self, well: Well) -> f64 {
        self.tables[well.index()].cum[PANELS]
    }

    /// `G_i(tau)` for rescaled time `tau >= 0`.
    pub fn rescaled_hazard(&self, well: Well, tau: f64) -> Result<f64> {
        let tau = finite("time", tau)?;
        if tau < 0.0 {
            return Err(Error::InvalidParameter(format!("time {tau} must be non-negative")));
        }
        let cum = &self.tables[well.index()].cum;
        let n = tau.floor();
        let frac = tau - n;
        let k = ((frac * PANELS as f64) as usize).min(PANELS - 1);
        Ok(n * cum[PANELS] + cum[k] + self.partial(well, k, frac)?)
    }

    /// `Lambda_i(t) = int_0^t exp(-D_i(s/T)/eps) ds` for real time `t`.
    pub fn integrated_hazard(&self, well: Well, t: f64) -> Result<f64> {
        let t = finite("time", t)?;
        self.rescaled_hazard(well, t / self.period())
    }

    /// Survival `P_i(sigma > t)` for real time `t`.
    pub fn survival(&self, well: Well, t: f64) -> Result<f64> {
        Ok((-self.integrated_hazard(well, t)?).exp())
    }

    fn partial(&self, well: Well, k: usize, u: f64) -> Result<f64> {
        let a = k as f64 / PANELS as f64;
        if u <= a {
            return Ok(0.0);
        }
        Ok(adaptive_simpson_rel(|v| self.rate(well, v), a, u, self.params.rel_tol)?.value)
    }

    /// `P_i(sigma in [lo T, hi T])` for phases `0 <= lo <= hi <= inf`.
    pub fn interval_probability(&self, well: Well, lo: f64, hi: f64) -> Result<f64> {
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::InvalidParameter(format!("interval [{lo}, {hi}] is not ordered in [0, inf]")));
        }
        let g_lo = self.rescaled_hazard(well, lo)?;
        let s_hi = if hi.is_infinite() { 0.0 } else { (-self.rescaled_hazard(well, hi)?).exp() };
        Ok(((-g_lo).exp() - s_hi).max(0.0))
    }

    /// Probability of the first transition out of `well` inside its window.
    pub fn window_probability(&self, well: Well) -> Result<f64> {
        let w = self.window(well);
        self.interval_probability(well, w.lo, w.hi)
    }

    /// `1 - window_probability`, without cancellation.
    pub fn failure_probability(&self, well: Well) -> Result<f64> {
        let w = self.window(well);
        let g_lo = self.rescaled_hazard(well, w.lo)?;
        let g_hi = self.rescaled_hazard(well, w.hi)?;
        Ok(-(-g_lo).exp_m1() + (-g_hi).exp())
    }

    /// Rescaled time solving `G_i(tau) - G_i(from) = e`.
    pub fn solve_transition(&self, well: Well, from: f64, e: f64) -> Result<f64> {
        let target = self.rescaled_hazard(well, from)? + e;
        let cum = &self.tables[well.index()].cum;
        let per = cum[PANELS];
        let mut n = (target / per).floor();
        let mut r = target - n * per;
        if r >= per {
            n += 1.0;
            r -= per;
        }
        let r = r.max(0.0);
        let k = match cum.partition_point(|&c| c <= r) {
            0 => 0,
            p => (p - 1).min(PANELS - 1),
        };
        let (mut lo, mut hi) = (k as f64 / PANELS as f64, (k + 1) as f64 / PANELS as f64);
        let residual = |u: f64| -> Result<f64> { Ok(cum[k] + self.partial(well, k, u)? - r) };
        let mut u = lo + (hi - lo) * ((r - cum[k]) / (cum[k + 1] - cum[k])).clamp(0.0, 1.0);
        for _ in 0..200 {
            let g = residual(u)?;
            if g > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let newton = u - g / self.rate(well, u);
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            let done = (next - u).abs() <= 1e-12 * (n + next).max(1e-3) || hi - lo <= 4.0 * f64::EPSILON;
            u = next;
            if done {
                break;
            }
        }
        Ok(n + u)
    }

    /// Exact-in-distribution first transition phase (rescaled time) from
    /// `well` given a unit exponential variate.
    pub fn transition_phase_from_exponential(&self, well: Well, e: f64) -> Result<f64> {
        self.solve_transition(well, 0.0, e)
    }

    /// Real-time first transition by inverse transform.
    pub fn sample_transition_time<R: Rng + ?Sized>(&self, well: Well, rng: &mut R) -> Result<f64> {
        let e: f64 = rng.sample(Exp1);
        Ok(self.transition_phase_from_exponential(well, e)? * self.period())
    }

    /// Real-time first transition by thinning against the constant bound
    /// `exp(-inf D_i / eps)`. Independent of the quadrature tables.
    pub fn sample_transition_time_thinning<R: Rng + ?Sized>(&self, well: Well, rng: &mut R) -> f64 {
        let bound = self.bounds[well.index()];
        let mut tau = 0.0;
        loop {
            let e: f64 = rng.sample(Exp1);
            tau += e / bound;
            let u: f64 = rng.random();
            if u * bound <= self.rate(well, tau) {
                return tau * self.period();
            }
        }
    }

    /// `n` inverse-transform transition phases from `well`, sample `k` drawn
    /// from its own stream; identical for any thread count.
    pub fn sample_phases(&self, well: Well, n: usize, seed: u64) -> Result<Vec<f64>> {
        (0..n)
            .into_par_iter()
            .map(|k| {
                let mut rng = sample_rng(seed, STREAM_INVERSE + well.index() as u64, k as u64);
                let e: f64 = rng.sample(Exp1);
                self.transition_phase_from_exponential(well, e)
            })
            .collect()
    }

    /// Thinning counterpart of [`Self::sample_phases`].
    pub fn sample_phases_thinning(&self, well: Well, n: usize, seed: u64) -> Vec<f64> {
        let period = self.period();
        (0..n)
            .into_par_iter()
            .map(|k| {
                let mut rng = sample_rng(seed, STREAM_THINNING + well.index() as u64, k as u64);
                self.sample_transition_time_thinning(well, &mut rng) / period
            })
            .collect()
    }

    /// The record `N(eps, mu) = min_i window_probability(i)`.
    pub fn quality(&self) -> Result<ChainEstimate> {
        let p = &self.params;
        let per_well = [self.window_probability(Well::Minus)?, self.window_probability(Well::Plus)?];
        let fail = [self.failure_probability(Well::Minus)?, self.failure_probability(Well::Plus)?];
        let failure = fail[0].max(fail[1]);
        let theory = if p.h > 0.0 { quality_exponent(&self.profile, p.mu, p.h).ok().map(|q| q.value) } else { None };
        Ok(ChainEstimate {
            eps: p.eps,
            mu: p.mu,
            h: p.h,
            n_exact: per_well[0].min(per_well[1]),
            per_well,
            failure,
            rate: p.eps * failure.ln(),
            theory,
        })
    }
}

/// Exact transition-window quality of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainEstimate {
    pub eps: f64,
    pub mu: f64,
    pub h: f64,
    /// `N(eps, mu)`.
    pub n_exact: f64,
    /// Window probabilities indexed by `[Minus, Plus]`.
    pub per_well: [f64; 2],
    /// `1 - N`, computed directly.
    pub failure: f64,
    /// `eps ln(1 - N)`.
    pub rate: f64,
    /// `F(mu, h)` when defined.
    pub theory: Option<f64>,
}

pub fn n_quality(profile: &DepthProfile, params: ChainParams) -> Result<ChainEstimate> {
    TwoStateChain::new(profile, params)?.quality()
}

/// Histogram over period units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values at or beyond the last edge.
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let edges = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
        Self { edges, counts: vec![0; bins], overflow: 0 }
    }

    pub fn add(&mut self, x: f64) {
        let (lo, hi) = (self.edges[0], self.edges[self.edges.len() - 1]);
        if !(x >= lo) {
            return;
        }
        if x >= hi {
            self.overflow += 1;
            return;
        }
        let bins = self.counts.len();
        let k = (((x - lo) / (hi - lo)) * bins as f64) as usize;
        self.counts[k.min(bins - 1)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    /// Rows `(bin_lo, bin_hi, count)`.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        self.edges.windows(2).zip(&self.counts).map(|(e, &c)| (e[0], e[1], c))
    }
}

/// Inter-transition statistics of the alternating chain started in `-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterspikeHistogram {
    /// Durations between successive transitions, in periods.
    pub durations: Histogram,
    /// Phases (mod 1) at which transitions occur.
    pub phases: Histogram,
}

/// Simulate `n_transitions` alternating transitions and histogram their
/// spacings over `[0, max_periods)` with `bins_per_period` bins per period.
pub fn interspike_histogram(
    chain: &TwoStateChain,
    n_transitions: usize,
    seed: u64,
    max_periods: usize,
    bins_per_period: usize,
) -> Result<InterspikeHistogram> {
    if n_transitions == 0 {
        return Err(Error::InvalidParameter("at least one transition is required".into()));
    }
    let max_periods = max_periods.max(1);
    let mut durations = Histogram::new(0.0, max_periods as f64, max_periods * bins_per_period.max(1));
    let mut phases = Histogram::new(0.0, 1.0, bins_per_period.max(1));
    let mut rng = sample_rng(derive_seed(seed, &[STREAM_SPIKES]), STREAM_SPIKES, 0);
    let (mut well, mut tau) = (Well::Minus, 0.0);
    for _ in 0..n_transitions {
        let e: f64 = rng.sample(Exp1);
        let next = chain.solve_transition(well, tau, e)?;
        durations.add(next - tau);
        phases.add(next - next.floor());
        tau = next;
        well = well.other();
    }
    Ok(InterspikeHistogram { durations, phases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::ExamplePotential;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn constant(d: f64) -> DepthProfile {
        DepthProfile::from_fns(move |_| d, move |_| d).unwrap()
    }

    fn example() -> DepthProfile {
        DepthProfile::from_potential(Arc::new(ExamplePotential::new(0.0).unwrap())).unwrap()
    }

    #[test]
    fn constant_depth_hazard_is_linear() {
        let (d, eps) = (0.3, 0.2);
        let chain = TwoStateChain::new(&constant(d), ChainParams::new(eps, 0.35, 0.05)).unwrap();
        for t in [0.0, 1.0, 7.3, 42.0] {
            let lam = chain.integrated_hazard(Well::Minus, t).unwrap();
            let exact = t * (-d / eps).exp();
            assert!((lam - exact).abs() <= 1e-12 * exact.max(1e-300), "{lam} vs {exact}");
        }
    }

    #[test]
    fn whole_periods_are_multiples() {
        let chain = TwoStateChain::new(&example(), ChainParams::new(0.2, 0.28, 0.05)).unwrap();
        let t = chain.period();
        let one = chain.integrated_hazard(Well::Plus, t).unwrap();
        let three = chain.integrated_hazard(Well::Plus, 3.0 * t).unwrap();
        assert!((three - 3.0 * one).abs() <= 1e-12 * three);
    }

    #[test]
    fn degenerate_and_full_windows() {
        let chain = TwoStateChain::new(&example(), ChainParams::new(0.2, 0.28, 0.0)).unwrap();
        assert_eq!(chain.window_probability(Well::Minus).unwrap(), 0.0);
        let full = chain.interval_probability(Well::Minus, 0.0, f64::INFINITY).unwrap();
        assert_eq!(full, 1.0);
    }

    #[test]
    fn constant_depth_window_is_exponential_law() {
        let (d, eps) = (0.3, 0.25);
        let chain = TwoStateChain::new(&constant(d), ChainParams::new(eps, 0.3, 0.1)).unwrap();
        let rate = chain.period() * (-d / eps).exp();
        let (t1, t2) = (0.2, 0.9);
        let p = chain.interval_probability(Well::Plus, t1, t2).unwrap();
        let exact = (-t1 * rate).exp() - (-t2 * rate).exp();
        assert!((p - exact).abs() < 1e-13);
    }

    #[test]
    fn failure_complements_window() {
        let chain = TwoStateChain::new(&example(), ChainParams::new(0.15, 0.26, 0.05)).unwrap();
        for well in Well::BOTH {
            let p = chain.window_probability(well).unwrap();
            let f = chain.failure_probability(well).unwrap();
            assert!((p + f - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn identical_depths_tie_wells() {
        let d = |t: f64| 0.3 - 0.1 * (2.0 * PI * t).sin();
        let p = DepthProfile::from_fns(d, d).unwrap();
        let q = n_quality(&p, ChainParams::new(0.15, 0.27, 0.05)).unwrap();
        assert!((q.per_well[0] - q.per_well[1]).abs() < 1e-14, "{:?}", q.per_well);
    }

    #[test]
    fn inversion_recovers_exponential_variate() {
        let chain = TwoStateChain::new(&example(), ChainParams::new(0.2, 0.3, 0.05)).unwrap();
        for e in [1e-6, 0.3, 1.0, 5.0, 40.0] {
            let tau = chain.transition_phase_from_exponential(Well::Minus, e).unwrap();
            let g = chain.rescaled_hazard(Well::Minus, tau).unwrap();
            assert!((g - e).abs() <= 1e-9 * e, "{g} vs {e}");
        }
    }

    #[test]
    fn larger_noise_transitions_earlier() {
        let d = 0.3;
        let mut last = f64::INFINITY;
        for eps in [0.1, 0.15, 0.2, 0.3] {
            let chain = TwoStateChain::new(&constant(d), ChainParams::new(eps, 0.3, 0.05)).unwrap();
            let t = chain.transition_phase_from_exponential(Well::Minus, 0.7).unwrap() * chain.period();
            assert!(t < last);
            last = t;
        }
    }

    #[test]
    fn single_transition_histogram() {
        let chain = TwoStateChain::new(&example(), ChainParams::new(0.2, 0.28, 0.05)).unwrap();
        let h = interspike_histogram(&chain, 1, 9, 4, 20).unwrap();
        assert_eq!(h.durations.total(), 1);
        assert_eq!(h.phases.total(), 1);
        assert!(interspike_histogram(&chain, 0, 9, 4, 20).is_err());
    }

    #[test]
    fn histogram_binning() {
        let mut h = Histogram::new(0.0, 2.0, 4);
        for x in [0.1, 0.6, 1.99, 2.0, 5.0, -1.0] {
            h.add(x);
        }
        assert_eq!(h.counts, vec![1, 1, 0, 1]);
        assert_eq!(h.overflow, 2);
        let rows: Vec<_> = h.rows().collect();
        assert_eq!(rows[1], (0.5, 1.0, 1));
    }

    #[test]
    fn sinusoid_period_integral_matches_bessel_series() {
        // int_0^1 exp(k cos(2 pi u)) du = I_0(k)
        let (m, a, eps, mu) = (0.4, 0.1, 0.1, 0.35);
        let p = DepthProfile::from_fns(move |t| m - a * (2.0 * PI * t).cos(), move |t| m + a * (2.0 * PI * t).cos()).unwrap();
        let chain = TwoStateChain::new(&p, ChainParams::new(eps, mu, 0.05)).unwrap();
        let k: f64 = a / eps;
        let mut i0 = 0.0;
        let mut term = 1.0;
        for j in 0..40 {
            if j > 0 {
                term *= (k / 2.0).powi(2) / (j * j) as f64;
            }
            i0 += term;
        }
        let exact = ((mu - m) / eps).exp() * i0;
        let got = chain.period_integral(Well::Minus);
        assert!((got - exact).abs() <= 1e-11 * exact, "{got} vs {exact}");
    }
}
