//! Analytic resonance quantities of a depth profile: transition phases,
//! the resonance interval, the quality exponent and the resonance point.

use serde::Serialize;

use crate::error::{finite, Error, Result};
use crate::numerics::optimize::{bisect_predicate, golden_section_min, grid_then_golden};
use crate::potential::{reduce_phase, DepthProfile, Well};

const SCAN_POINTS: usize = 1024;
const PHASE_TOL: f64 = 1e-13;

/// Default grid for the coarse stage of the `mu_R(h)` search.
pub const RESONANCE_GRID: usize = 512;
/// Default refinement tolerance of the `mu_R(h)` search.
pub const RESONANCE_TOL: f64 = 1e-9;
/// Default window half-widths for the `h -> 0` extrapolation.
pub const DEFAULT_H_SEQUENCE: [f64; 5] = [0.08, 0.04, 0.02, 0.01, 0.005];

/// How the level `mu` is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingKind {
    /// `D_i(s) <= mu` already at the start phase.
    Immediate,
    Transversal,
    /// `mu` equals an extremal depth: the level is touched, not crossed.
    Tangential,
    /// `mu` is below the depth range.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    /// `a_mu^i(s)`, `+inf` for [`CrossingKind::Never`].
    pub phase: f64,
    pub kind: CrossingKind,
}

/// `a_mu^i(s) = inf { t >= s : D_i(t) <= mu }`.
pub fn transition_phase(profile: &DepthProfile, well: Well, mu: f64, s: f64) -> Result<f64> {
    transition_crossing(profile, well, mu, s).map(|c| c.phase)
}

/// [`transition_phase`] with the crossing classification.
pub fn transition_crossing(profile: &DepthProfile, well: Well, mu: f64, s: f64) -> Result<Crossing> {
    let mu = finite("mu", mu)?;
    let s = finite("start phase", s)?;
    if mu < 0.0 {
        return Err(Error::InvalidParameter(format!("mu = {mu} must be non-negative")));
    }
    let d = |t: f64| profile.depth(well, t);
    if d(s) <= mu {
        return Ok(Crossing { phase: s, kind: CrossingKind::Immediate });
    }
    let ex = profile.extrema(well);
    if mu < ex.inf {
        return Ok(Crossing { phase: f64::INFINITY, kind: CrossingKind::Never });
    }
    let scale = ex.sup.abs().max(1.0);
    let tangential = mu - ex.inf <= 1e-12 * scale;
    // The sub-level set is one arc around the minimum; its left end is the
    // first entry after s.
    let t_min = s + reduce_phase(ex.arg_inf - s);
    let end = if d(t_min) <= mu { t_min } else { s + 1.0 };
    let step = 1.0 / SCAN_POINTS as f64;
    let mut prev = s;
    let mut t = s + step;
    while t < end {
        if d(t) <= mu {
            break;
        }
        prev = t;
        t += step;
    }
    let hi = t.min(end);
    if !(d(hi) <= mu) {
        // Only reachable when mu sits at the numerical minimum.
        return Ok(Crossing { phase: t_min, kind: CrossingKind::Tangential });
    }
    let phase = bisect_predicate(|x| d(x) <= mu, prev, hi, PHASE_TOL);
    let kind = if tangential { CrossingKind::Tangential } else { CrossingKind::Transversal };
    Ok(Crossing { phase, kind })
}

/// Per-well open interval of attained depths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthRange {
    pub well: Well,
    pub inf: f64,
    pub sup: f64,
}

impl DepthRange {
    pub fn is_degenerate(&self) -> bool {
        self.sup - self.inf <= 1e-12 * self.sup.abs().max(1.0)
    }
}

pub fn depth_ranges(profile: &DepthProfile) -> [DepthRange; 2] {
    Well::BOTH.map(|well| {
        let ex = profile.extrema(well);
        DepthRange { well, inf: ex.inf, sup: ex.sup }
    })
}

/// `I_R = ] max_i inf_t D_i(t), inf_t max_i D_i(t) [`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceBounds {
    pub lower: f64,
    /// Well whose minimal depth sets the lower bound.
    pub lower_well: Well,
    pub lower_at: f64,
    pub upper: f64,
    pub upper_at: f64,
    pub empty: bool,
}

impl ResonanceBounds {
    pub fn contains(&self, mu: f64) -> bool {
        !self.empty && self.lower < mu && mu < self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// `[lower + f w, upper - f w]` for interior fraction `f`.
    pub fn interior(&self, fraction: f64) -> (f64, f64) {
        let w = self.width();
        (self.lower + fraction * w, self.upper - fraction * w)
    }
}

pub fn resonance_interval(profile: &DepthProfile) -> ResonanceBounds {
    let [em, ep] = [profile.extrema(Well::Minus), profile.extrema(Well::Plus)];
    let (lower_well, lower, lower_at) = if em.inf >= ep.inf {
        (Well::Minus, em.inf, em.arg_inf)
    } else {
        (Well::Plus, ep.inf, ep.arg_inf)
    };
    let upper_fn = |t: f64| profile.depth(Well::Minus, t).max(profile.depth(Well::Plus, t));
    let n = 4096;
    let step = 1.0 / n as f64;
    let (mut k_best, mut v_best) = (0, f64::INFINITY);
    for k in 0..n {
        let v = upper_fn(k as f64 * step);
        if v < v_best {
            k_best = k;
            v_best = v;
        }
    }
    let c = k_best as f64 * step;
    let (t, v) = golden_section_min(upper_fn, c - step, c + step, 1e-14);
    let (upper_at, upper) = if v < v_best { (reduce_phase(t), v) } else { (c, v_best) };
    let empty = !(lower < upper) || upper - lower <= 1e-12 * upper.abs().max(1.0);
    ResonanceBounds { lower, lower_well, lower_at, upper, upper_at, empty }
}

/// Value of `max_i { mu - D_i(a_mu^i - h) }` and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityExponent {
    pub mu: f64,
    pub h: f64,
    pub value: f64,
    /// Well achieving the maximum.
    pub well: Well,
    /// `mu - D_i(a_mu^i - h)` indexed by `[Minus, Plus]`.
    pub per_well: [f64; 2],
    pub transition_phases: [f64; 2],
    /// Some window starts before phase 0; its depth is read periodically.
    pub clipped: bool,
    /// Every crossing is transversal.
    pub transversal: bool,
}

/// The quality exponent `F(mu, h)`.
///
/// Errors when a transition phase is infinite, or when `h >= a_mu^i` for
/// every well so that no window starts inside the period.
pub fn quality_exponent(profile: &DepthProfile, mu: f64, h: f64) -> Result<QualityExponent> {
    let h = finite("h", h)?;
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::InvalidParameter(format!("window half-width h = {h} outside (0, 1/2)")));
    }
    let mut phases = [0.0; 2];
    let mut per_well = [0.0; 2];
    let mut transversal = true;
    for well in Well::BOTH {
        let c = transition_crossing(profile, well, mu, 0.0)?;
        if c.kind == CrossingKind::Never {
            return Err(Error::NeverCrosses { well, mu });
        }
        transversal &= c.kind == CrossingKind::Transversal;
        phases[well.index()] = c.phase;
        per_well[well.index()] = mu - profile.depth(well, c.phase - h);
    }
    let a_min = phases[0].min(phases[1]);
    if h >= phases[0] && h >= phases[1] {
        return Err(Error::Window { h, a_mu: a_min });
    }
    let (well, value) = if per_well[0] >= per_well[1] {
        (Well::Minus, per_well[0])
    } else {
        (Well::Plus, per_well[1])
    };
    Ok(QualityExponent {
        mu,
        h,
        value,
        well,
        per_well,
        transition_phases: phases,
        clipped: h > a_min,
        transversal,
    })
}

/// Largest window half-width for which every window on `[mu_lo, mu_hi]`
/// starts at a positive phase, `min_i min_mu a_mu^i`, sampled on `n` points.
/// For such `h` the quality exponent is strictly negative.
pub fn admissible_h(profile: &DepthProfile, mu_lo: f64, mu_hi: f64, n: usize) -> Result<f64> {
    let n = n.max(2);
    let mut h0 = 0.5_f64;
    for k in 0..n {
        let mu = mu_lo + (mu_hi - mu_lo) * k as f64 / (n - 1) as f64;
        for well in Well::BOTH {
            h0 = h0.min(transition_phase(profile, well, mu, 0.0)?);
        }
    }
    Ok(h0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimum {
    Interior,
    LowerBoundary,
    UpperBoundary,
}

/// `mu_R(h)`: minimiser of `mu -> F(mu, h)` over a search interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceAtH {
    pub h: f64,
    pub mu: f64,
    pub value: f64,
    pub optimum: Optimum,
}

pub fn resonance_point_h(profile: &DepthProfile, h: f64, search: (f64, f64)) -> Result<ResonanceAtH> {
    resonance_point_h_with(profile, h, search, RESONANCE_GRID, RESONANCE_TOL)
}

pub fn resonance_point_h_with(
    profile: &DepthProfile,
    h: f64,
    (lo, hi): (f64, f64),
    grid: usize,
    tol: f64,
) -> Result<ResonanceAtH> {
    let lo = finite("search lower bound", lo)?;
    let hi = finite("search upper bound", hi)?;
    if !(lo < hi) {
        return Err(Error::EmptyInterval { lo, hi });
    }
    // Probe once so that parameter errors surface instead of being skipped.
    quality_exponent(profile, 0.5 * (lo + hi), h)?;
    let f = |mu: f64| quality_exponent(profile, mu, h).map_or(f64::NAN, |q| q.value);
    let (mu, value) = grid_then_golden(f, lo, hi, grid, tol).ok_or(Error::EmptyInterval { lo, hi })?;
    let edge = 2.0 * tol.max(1e-15 * hi.abs().max(1.0));
    let optimum = if mu - lo <= edge {
        Optimum::LowerBoundary
    } else if hi - mu <= edge {
        Optimum::UpperBoundary
    } else {
        Optimum::Interior
    };
    Ok(ResonanceAtH { h, mu, value, optimum })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceMethod {
    Inflection,
    Extrapolation,
}

/// The resonance point by both available methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonancePoint {
    /// Preferred value: the inflection depth when available.
    pub mu_r: f64,
    pub method: ResonanceMethod,
    pub inflection: Option<Inflection>,
    /// Why the inflection method is unavailable.
    pub inflection_note: Option<String>,
    pub extrapolated: Option<f64>,
    /// Observed convergence order of `mu_R(h)`.
    pub order: Option<f64>,
    pub samples: Vec<ResonanceAtH>,
    /// `|inflection - extrapolated|` when both exist.
    pub gap: Option<f64>,
    pub in_interval: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inflection {
    pub phase: f64,
    pub depth: f64,
}

/// Inflection point of `D_1` on its decreasing branch.
pub fn inflection_point(profile: &DepthProfile) -> Result<Inflection> {
    let ex = profile.extrema(Well::Plus);
    if ex.is_constant() {
        return Err(Error::NoInflection("depth is constant".into()));
    }
    let start = ex.arg_sup;
    let len = reduce_phase(ex.arg_inf - ex.arg_sup);
    let d = |t: f64| profile.depth(Well::Plus, t);
    let delta = 1e-3 * len;
    let second = |t: f64| d(t - delta) - 2.0 * d(t) + d(t + delta);
    let noise = 64.0 * f64::EPSILON * ex.sup.abs().max(1.0);
    let sign = |t: f64| {
        let v = second(t);
        if v > noise {
            1
        } else if v < -noise {
            -1
        } else {
            0
        }
    };
    let n = 4096;
    let pts: Vec<f64> = (1..n).map(|k| start + len * k as f64 / n as f64).collect();
    let mut changes = Vec::new();
    let mut last: Option<(f64, i32)> = None;
    for &t in &pts[2..pts.len() - 2] {
        let s = sign(t);
        if s == 0 {
            continue;
        }
        if let Some((tp, sp)) = last {
            if sp != s {
                changes.push((tp, t, sp));
            }
        }
        last = Some((t, s));
    }
    match changes.len() {
        0 => Err(Error::NoInflection("second difference keeps its sign on the decreasing branch".into())),
        1 => {
            let (a, b, sa) = changes[0];
            let s = bisect_predicate(|t| second(t) * sa as f64 <= 0.0, a, b, 1e-15);
            Ok(Inflection { phase: reduce_phase(s), depth: d(s) })
        }
        _ => Err(Error::MultipleInflections {
            locations: changes.iter().map(|c| reduce_phase(0.5 * (c.0 + c.1))).collect(),
        }),
    }
}

/// `mu_R = lim_{h -> 0} mu_R(h)` by inflection and by Richardson extrapolation
/// over `hs` (decreasing, successive ratio 2).
pub fn resonance_point(profile: &DepthProfile, hs: &[f64]) -> Result<ResonancePoint> {
    let bounds = resonance_interval(profile);
    let (inflection, inflection_note) = match inflection_point(profile) {
        Ok(i) => (Some(i), None),
        Err(Error::NoInflection(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    let mut samples = Vec::new();
    if !bounds.empty {
        let search = bounds.interior(1e-6);
        for &h in hs {
            samples.push(resonance_point_h(profile, h, search)?);
        }
    }
    let (extrapolated, order) = richardson(&samples);
    let (mu_r, method) = match (inflection, extrapolated) {
        (Some(i), _) => (i.depth, ResonanceMethod::Inflection),
        (None, Some(e)) => (e, ResonanceMethod::Extrapolation),
        (None, None) => {
            return Err(Error::NoInflection(
                inflection_note.unwrap_or_default() + "; too few window widths to extrapolate",
            ))
        }
    };
    let gap = match (inflection, extrapolated) {
        (Some(i), Some(e)) => Some((i.depth - e).abs()),
        _ => None,
    };
    let in_interval = !bounds.empty && bounds.lower <= mu_r && mu_r <= bounds.upper;
    Ok(ResonancePoint {
        mu_r,
        method,
        inflection,
        inflection_note,
        extrapolated,
        order,
        samples,
        gap,
        in_interval,
    })
}

/// Richardson extrapolation to `h = 0` from the three smallest `h`, using the
/// observed order. Falls back to linear extrapolation with two samples.
fn richardson(samples: &[ResonanceAtH]) -> (Option<f64>, Option<f64>) {
    let n = samples.len();
    if n < 2 {
        return (None, None);
    }
    let (h1, m1) = (samples[n - 1].h, samples[n - 1].mu);
    let (h2, m2) = (samples[n - 2].h, samples[n - 2].mu);
    let ratio = h2 / h1;
    let mut order = 1.0;
    if n >= 3 {
        let m3 = samples[n - 3].mu;
        let (d1, d2) = (m2 - m1, m3 - m2);
        if d1 != 0.0 && d2 / d1 > 0.0 {
            let p = (d2 / d1).ln() / ratio.ln();
            if p.is_finite() && p > 0.25 {
                order = p;
            }
        }
    }
    let value = m1 + (m1 - m2) / (ratio.powf(order) - 1.0);
    (Some(value), Some(order))
}
