//! Euler-Maruyama simulation of `dX = -dU/dx(t/T, X) dt + sqrt(2 eps) dW`
//! with `T = exp(mu/eps)`, and Monte Carlo estimates of the transition-window
//! probability.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{quality_exponent, transition_crossing, CrossingKind};
use crate::error::{finite, Error, Result};
use crate::numerics::seed::{derive_seed, sample_rng};
use crate::numerics::stats::wilson_interval;
use crate::potential::{reduce_phase, validate_potential, DepthProfile, Potential, ValidationGrid, ValidationReport, Well};

/// Per-sample cap on Euler steps.
pub const STEP_BUDGET: u64 = 100_000_000;
const STREAM_TAG: u64 = 0x5DE0;

/// A potential together with its depth profile and drift Lipschitz bound.
#[derive(Debug, Clone)]
pub struct Diffusion {
    potential: Arc<dyn Potential>,
    profile: DepthProfile,
    report: ValidationReport,
}

impl Diffusion {
    pub fn new(potential: Arc<dyn Potential>) -> Result<Self> {
        let report = validate_potential(potential.as_ref(), ValidationGrid::default())?;
        let profile = DepthProfile::from_potential(Arc::clone(&potential))?;
        Ok(Self { potential, profile, report })
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    pub fn profile(&self) -> &DepthProfile {
        &self.profile
    }

    pub fn validation(&self) -> &ValidationReport {
        &self.report
    }

    /// Drift Lipschitz bound `L` over the validation region.
    pub fn lipschitz(&self) -> f64 {
        self.report.drift_lipschitz
    }

    /// `min(eps, 1) / (10 L)`.
    pub fn default_step(&self, eps: f64) -> f64 {
        eps.min(1.0) / (10.0 * self.lipschitz())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimParams {
    pub eps: f64,
    pub mu: f64,
    pub h: f64,
    pub start_well: Well,
    /// Defaults to the position of `start_well`.
    pub start_position: Option<f64>,
    /// Real-time step; defaults to [`Diffusion::default_step`].
    pub step: Option<f64>,
    /// Cutoff in periods; defaults to `a_mu^i + 2h`.
    pub horizon: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Samples with `|X| > x_max` are aborted as escaped.
    pub x_max: f64,
    pub step_budget: u64,
}

impl SimParams {
    pub fn new(eps: f64, mu: f64, h: f64, samples: usize, seed: u64) -> Self {
        Self {
            eps,
            mu,
            h,
            start_well: Well::Minus,
            start_position: None,
            step: None,
            horizon: None,
            samples,
            seed,
            x_max: 3.5,
            step_budget: STEP_BUDGET,
        }
    }

    pub fn period(&self) -> f64 {
        (self.mu / self.eps).exp()
    }

    fn check(&self, diffusion: &Diffusion) -> Result<()> {
        finite("eps", self.eps)?;
        finite("mu", self.mu)?;
        finite("h", self.h)?;
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps = {} must be positive", self.eps)));
        }
        if !(self.h >= 0.0 && self.h < 0.5) {
            return Err(Error::InvalidParameter(format!("h = {} outside [0, 1/2)", self.h)));
        }
        let k1 = diffusion.potential.growth().k1;
        if !(self.x_max >= k1 + 2.0 - 1e-12) {
            return Err(Error::InvalidParameter(format!("x_max = {} below K1 + 2 = {}", self.x_max, k1 + 2.0)));
        }
        if let Some(step) = self.step {
            let limit = diffusion.default_step(self.eps);
            if !(step > 0.0 && step <= limit * (1.0 + 1e-12)) {
                return Err(Error::InvalidParameter(format!("step {step} outside (0, {limit}]")));
            }
        }
        if let Some(h) = self.horizon {
            if !(h >= 0.0) {
                return Err(Error::InvalidParameter(format!("horizon {h} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Result of one first-passage simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// Level `-i` reached at `phase = tau / T`.
    Hit { phase: f64 },
    Truncated,
    Escaped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionSample {
    pub outcome: Outcome,
    pub in_window: bool,
    /// The step budget ran out before the horizon (implies truncation).
    pub budget_exhausted: bool,
    pub min_position: f64,
    pub max_position: f64,
}

impl TransitionSample {
    pub fn hit_phase(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Hit { phase } => Some(phase),
            _ => None,
        }
    }
}

/// One Euler-Maruyama step in real time.
#[inline]
pub fn step_euler(
    potential: &dyn Potential,
    period: f64,
    eps: f64,
    dt: f64,
    (t, x): (f64, f64),
    noise: f64,
) -> Result<(f64, f64)> {
    let drift = potential.gradient(reduce_phase(t / period), x);
    let next = x - drift * dt + (2.0 * eps * dt).sqrt() * noise;
    if next.is_finite() {
        Ok((t + dt, next))
    } else {
        Err(Error::BlowUp { time: t, position: x })
    }
}

/// Window `[max(0, a - h), a + h]` of a well, in periods.
pub fn window(profile: &DepthProfile, well: Well, mu: f64, h: f64) -> Result<(f64, f64, f64)> {
    let c = transition_crossing(profile, well, mu, 0.0)?;
    if c.kind == CrossingKind::Never {
        return Err(Error::NeverCrosses { well, mu });
    }
    Ok(((c.phase - h).max(0.0), c.phase + h, c.phase))
}

/// Simulate sample `index` of the ensemble started in `params.start_well`.
pub fn simulate_first_hit(diffusion: &Diffusion, params: &SimParams, index: u64) -> Result<TransitionSample> {
    params.check(diffusion)?;
    let (lo, hi, a) = window(&diffusion.profile, params.start_well, params.mu, params.h)?;
    let horizon = params.horizon.unwrap_or(a + 2.0 * params.h);
    run_path(diffusion, params, index, (lo, hi), horizon)
}

fn run_path(
    diffusion: &Diffusion,
    params: &SimParams,
    index: u64,
    (lo, hi): (f64, f64),
    horizon: f64,
) -> Result<TransitionSample> {
    let well = params.start_well;
    let period = params.period();
    let dt = params.step.unwrap_or_else(|| diffusion.default_step(params.eps));
    let target = -well.position();
    let x0 = params.start_position.unwrap_or(well.position());
    let across = |x: f64| if target > 0.0 { x >= target } else { x <= target };
    let mut sample = TransitionSample {
        outcome: Outcome::Truncated,
        in_window: false,
        budget_exhausted: false,
        min_position: x0,
        max_position: x0,
    };
    if across(x0) {
        sample.outcome = Outcome::Hit { phase: 0.0 };
        sample.in_window = lo <= 0.0 && 0.0 <= hi;
        return Ok(sample);
    }
    let t_end = horizon * period;
    let mut rng = sample_rng(params.seed, STREAM_TAG + well.index() as u64, index);
    let (mut t, mut x) = (0.0, x0);
    let p = diffusion.potential();
    let mut steps = 0u64;
    while t < t_end {
        if steps >= params.step_budget {
            sample.budget_exhausted = true;
            return Ok(sample);
        }
        let noise: f64 = rng.sample(StandardNormal);
        let (tn, xn) = step_euler(p, period, params.eps, dt, (t, x), noise)?;
        steps += 1;
        sample.min_position = sample.min_position.min(xn);
        sample.max_position = sample.max_position.max(xn);
        if across(xn) {
            let t_hit = t + dt * (target - x) / (xn - x);
            if t_hit <= t_end {
                let phase = t_hit / period;
                sample.outcome = Outcome::Hit { phase };
                sample.in_window = lo <= phase && phase <= hi;
            }
            return Ok(sample);
        }
        if xn.abs() > params.x_max {
            sample.outcome = Outcome::Escaped;
            return Ok(sample);
        }
        (t, x) = (tn, xn);
    }
    Ok(sample)
}

/// Outcome counts of one ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WellCounts {
    pub well: Well,
    pub samples: usize,
    pub in_window: usize,
    /// Hits before the window.
    pub early: usize,
    /// Hits after the window.
    pub late: usize,
    pub truncated: usize,
    pub escaped: usize,
    pub budget_exhausted: usize,
}

impl WellCounts {
    /// Samples that count toward the window fraction (escapes excluded).
    pub fn effective(&self) -> usize {
        self.samples - self.escaped
    }

    pub fn fraction(&self) -> f64 {
        let n = self.effective();
        if n == 0 {
            0.0
        } else {
            self.in_window as f64 / n as f64
        }
    }
}

/// Monte Carlo estimate of `M(eps, mu)` and its exponential rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub eps: f64,
    pub mu: f64,
    pub h: f64,
    pub step: f64,
    pub counts: [WellCounts; 2],
    /// Well attaining the minimum fraction.
    pub well: Well,
    pub m_hat: f64,
    pub ci: (f64, f64),
    pub level: f64,
    /// `eps ln(1 - M_hat)`.
    pub rate_hat: f64,
    /// `rate_hat` evaluated at the interval ends, ordered.
    pub rate_ci: (f64, f64),
    /// `F(mu, h)` when defined.
    pub theory: Option<f64>,
    /// No sample hit its window.
    pub degenerate_ci: bool,
}

pub const CONFIDENCE: f64 = 0.95;

/// Estimate the transition-window probability from both wells.
pub fn estimate_window_probability(diffusion: &Diffusion, params: &SimParams) -> Result<RateEstimate> {
    params.check(diffusion)?;
    if params.samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let mut counts = Vec::with_capacity(2);
    for well in Well::BOTH {
        let p = SimParams {
            start_well: well,
            start_position: if well == params.start_well { params.start_position } else { None },
            ..*params
        };
        let (lo, hi, a) = window(&diffusion.profile, well, p.mu, p.h)?;
        let horizon = p.horizon.unwrap_or(a + 2.0 * p.h);
        let samples: Vec<TransitionSample> = (0..p.samples as u64)
            .into_par_iter()
            .map(|k| run_path(diffusion, &p, k, (lo, hi), horizon))
            .collect::<Result<_>>()?;
        let mut c = WellCounts {
            well,
            samples: samples.len(),
            in_window: 0,
            early: 0,
            late: 0,
            truncated: 0,
            escaped: 0,
            budget_exhausted: 0,
        };
        for s in &samples {
            match s.outcome {
                Outcome::Hit { .. } if s.in_window => c.in_window += 1,
                Outcome::Hit { phase } if phase < lo => c.early += 1,
                Outcome::Hit { .. } => c.late += 1,
                Outcome::Truncated => c.truncated += 1,
                Outcome::Escaped => c.escaped += 1,
            }
            c.budget_exhausted += s.budget_exhausted as usize;
        }
        if c.truncated + c.escaped == c.samples {
            return Err(Error::DegenerateEstimate {
                well,
                samples: c.samples,
                truncated: c.truncated,
                escaped: c.escaped,
            });
        }
        counts.push(c);
    }
    let counts = [counts[0], counts[1]];
    let idx = if counts[0].fraction() <= counts[1].fraction() { 0 } else { 1 };
    let c = counts[idx];
    let m_hat = c.fraction();
    let ci = wilson_interval(c.in_window, c.effective(), CONFIDENCE);
    let rate = |m: f64| params.eps * (1.0 - m).ln();
    let theory = if params.h > 0.0 {
        quality_exponent(&diffusion.profile, params.mu, params.h).ok().map(|q| q.value)
    } else {
        None
    };
    Ok(RateEstimate {
        eps: params.eps,
        mu: params.mu,
        h: params.h,
        step: params.step.unwrap_or_else(|| diffusion.default_step(params.eps)),
        counts,
        well: c.well,
        m_hat,
        ci,
        level: CONFIDENCE,
        rate_hat: rate(m_hat),
        rate_ci: (rate(ci.1), rate(ci.0)),
        theory,
        degenerate_ci: c.in_window == 0,
    })
}

/// One cell of a rate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCell {
    pub eps_index: usize,
    pub mu_index: usize,
    pub eps: f64,
    pub mu: f64,
    pub seed: u64,
    pub result: std::result::Result<RateEstimate, Error>,
}

/// Seed of sweep cell `(i, j)`.
pub fn cell_seed(master: u64, eps_index: usize, mu_index: usize) -> u64 {
    derive_seed(master, &[eps_index as u64, mu_index as u64])
}

/// Estimates over the `eps x mu` grid; cell errors are recorded.
pub fn rate_curve(diffusion: &Diffusion, eps_list: &[f64], mu_list: &[f64], h: f64, base: &SimParams) -> Vec<RateCell> {
    let mut cells = Vec::with_capacity(eps_list.len() * mu_list.len());
    for (i, &eps) in eps_list.iter().enumerate() {
        for (j, &mu) in mu_list.iter().enumerate() {
            let seed = cell_seed(base.seed, i, j);
            let params = SimParams { eps, mu, h, seed, ..*base };
            let result = estimate_window_probability(diffusion, &params);
            cells.push(RateCell { eps_index: i, mu_index: j, eps, mu, seed, result });
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::ExamplePotential;

    fn diffusion() -> Diffusion {
        Diffusion::new(Arc::new(ExamplePotential::new(0.0).unwrap())).unwrap()
    }

    #[test]
    fn zero_noise_at_critical_point_is_fixed() {
        let p = ExamplePotential::new(0.0).unwrap();
        for x in [-1.0, 0.0, 1.0] {
            let (t, y) = step_euler(&p, 3.0, 0.2, 1e-3, (0.4, x), 0.0).unwrap();
            assert_eq!(y, x);
            assert_eq!(t, 0.4 + 1e-3);
        }
    }

    #[test]
    fn zero_noise_relaxes_to_minimum() {
        let p = ExamplePotential::new(0.0).unwrap();
        let (_, y) = step_euler(&p, 3.0, 0.2, 1e-3, (0.0, -1.1), 0.0).unwrap();
        assert!(y > -1.1 && y < -1.0);
    }

    #[test]
    fn non_finite_step_is_blow_up() {
        let p = ExamplePotential::new(0.0).unwrap();
        assert!(matches!(step_euler(&p, 3.0, 0.2, 1e300, (0.0, 1e100), 0.0), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn default_step_resolves_stiffness() {
        let d = diffusion();
        let l = d.lipschitz();
        // sup |U''| on [-3.5, 3.5] is attained at the edges
        assert!(l > 800.0 && l < 1100.0, "L = {l}");
        assert!((d.default_step(0.2) - 0.2 / (10.0 * l)).abs() < 1e-18);
    }

    #[test]
    fn zero_horizon_truncates() {
        let d = diffusion();
        let mut p = SimParams::new(0.3, 0.28, 0.05, 100, 1);
        p.horizon = Some(0.0);
        let s = simulate_first_hit(&d, &p, 0).unwrap();
        assert_eq!(s.outcome, Outcome::Truncated);
        assert!(!s.in_window);
    }

    #[test]
    fn start_across_target_hits_immediately() {
        let d = diffusion();
        let mut p = SimParams::new(0.3, 0.28, 0.05, 100, 1);
        p.start_position = Some(1.0);
        let s = simulate_first_hit(&d, &p, 0).unwrap();
        assert_eq!(s.hit_phase(), Some(0.0));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let d = diffusion();
        let mut p = SimParams::new(0.3, 0.28, 0.05, 100, 1);
        p.step = Some(1.0);
        assert!(matches!(simulate_first_hit(&d, &p, 0), Err(Error::InvalidParameter(_))));
        p.step = None;
        p.x_max = 2.0;
        assert!(matches!(simulate_first_hit(&d, &p, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn samples_are_reproducible() {
        let d = diffusion();
        let p = SimParams::new(0.35, 0.26, 0.05, 100, 77);
        let a = simulate_first_hit(&d, &p, 5).unwrap();
        let b = simulate_first_hit(&d, &p, 5).unwrap();
        assert_eq!(a, b);
    }
}
