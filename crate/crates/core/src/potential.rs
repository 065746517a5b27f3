//! Time-periodic double-well potentials `U(t, x)`.
//!
//! Time arguments are phases in period units; every public entry point
//! reduces them to `[0, 1)` by subtracting the floor. Critical points are
//! fixed at `-1`, `0` and `+1` for all phases.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{finite, Error, Result};
use crate::numerics::optimize::golden_section_min;

/// Label of a potential minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Well {
    Minus,
    Plus,
}

impl Well {
    pub const BOTH: [Well; 2] = [Well::Minus, Well::Plus];

    /// Location of the minimum, `-1.0` or `+1.0`.
    pub fn position(self) -> f64 {
        match self {
            Well::Minus => -1.0,
            Well::Plus => 1.0,
        }
    }

    pub fn other(self) -> Well {
        match self {
            Well::Minus => Well::Plus,
            Well::Plus => Well::Minus,
        }
    }

    pub fn from_sign(sign: i32) -> Option<Well> {
        match sign {
            -1 => Some(Well::Minus),
            1 => Some(Well::Plus),
            _ => None,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Well::Minus => 0,
            Well::Plus => 1,
        }
    }
}

impl fmt::Display for Well {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Well::Minus => write!(f, "-1"),
            Well::Plus => write!(f, "+1"),
        }
    }
}

/// Constants of the uniform growth condition: `dU/dx <= -k2` for `x <= -k1`
/// and `dU/dx >= k2` for `x >= k1`, at every phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Growth {
    pub k1: f64,
    pub k2: f64,
}

/// A 1-periodic double-well potential. Implementors receive phases already
/// reduced to `[0, 1)`.
pub trait Potential: Send + Sync + fmt::Debug {
    fn energy(&self, phase: f64, x: f64) -> f64;
    fn gradient(&self, phase: f64, x: f64) -> f64;
    fn growth(&self) -> Growth;
    fn name(&self) -> String;
}

/// Reduce a time argument to `[0, 1)`.
#[inline]
pub fn reduce_phase(t: f64) -> f64 {
    let r = t - t.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

pub fn eval_potential(p: &dyn Potential, t: f64, x: f64) -> Result<f64> {
    let t = finite("time", t)?;
    let x = finite("position", x)?;
    Ok(p.energy(reduce_phase(t), x))
}

pub fn eval_gradient(p: &dyn Potential, t: f64, x: f64) -> Result<f64> {
    let t = finite("time", t)?;
    let x = finite("position", x)?;
    Ok(p.gradient(reduce_phase(t), x))
}

/// Barrier depth `D_i(t) = U(t, 0) - U(t, i)`; fails unless strictly positive.
pub fn depth(p: &dyn Potential, well: Well, t: f64) -> Result<f64> {
    let t = reduce_phase(finite("time", t)?);
    let d = p.energy(t, 0.0) - p.energy(t, well.position());
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::AssumptionViolation(format!(
            "depth of well {well} is {d} at phase {t}"
        )))
    }
}

/// The worked double-well example
///
/// ```text
/// U(t, x) = x^6/6 - cos(2 pi (t - 1/4 + psi sgn x)) (x^5/5 - x^3/3) - x^2/2
/// ```
///
/// with phase parameter `psi` in `[0, 1/4)` and `sgn(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExamplePotential {
    psi: f64,
}

impl ExamplePotential {
    pub fn new(psi: f64) -> Result<Self> {
        if !(0.0..0.25).contains(&psi) {
            return Err(Error::InvalidParameter(format!(
                "psi = {psi} outside [0, 1/4)"
            )));
        }
        Ok(Self { psi })
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    #[inline]
    fn modulation(&self, phase: f64, x: f64) -> f64 {
        let s = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        (2.0 * PI * (phase - 0.25 + self.psi * s)).cos()
    }
}

impl Potential for ExamplePotential {
    fn energy(&self, phase: f64, x: f64) -> f64 {
        let x2 = x * x;
        let x3 = x2 * x;
        let c = self.modulation(phase, x);
        x3 * x3 / 6.0 - c * (x3 * x2 / 5.0 - x3 / 3.0) - x2 / 2.0
    }

    fn gradient(&self, phase: f64, x: f64) -> f64 {
        let x2 = x * x;
        let c = self.modulation(phase, x);
        x2 * x2 * x - c * (x2 * x2 - x2) - x
    }

    fn growth(&self) -> Growth {
        // |dU/dx| >= |x| (x^2 - 1)(x^2 - |x| + 1) >= 3.28 for |x| >= 1.5
        Growth { k1: 1.5, k2: 3.0 }
    }

    fn name(&self) -> String {
        format!("example(psi={})", self.psi)
    }
}

/// Time-independent symmetric quartic `U(x) = d (x^4 - 2 x^2)` with both
/// depths equal to `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticPotential {
    depth: f64,
}

impl QuarticPotential {
    pub fn new(depth: f64) -> Result<Self> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(Error::InvalidParameter(format!("quartic depth {depth} must be positive")));
        }
        Ok(Self { depth })
    }
}

impl Potential for QuarticPotential {
    fn energy(&self, _phase: f64, x: f64) -> f64 {
        let x2 = x * x;
        self.depth * (x2 * x2 - 2.0 * x2)
    }

    fn gradient(&self, _phase: f64, x: f64) -> f64 {
        4.0 * self.depth * (x * x * x - x)
    }

    fn growth(&self) -> Growth {
        Growth { k1: 1.5, k2: 7.0 * self.depth }
    }

    fn name(&self) -> String {
        format!("quartic(depth={})", self.depth)
    }
}

type PhaseSpaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A user-supplied potential given by energy and gradient closures.
#[derive(Clone)]
pub struct FnPotential {
    name: String,
    energy: PhaseSpaceFn,
    gradient: PhaseSpaceFn,
    growth: Growth,
}

impl FnPotential {
    pub fn new<E, G>(name: impl Into<String>, energy: E, gradient: G, growth: Growth) -> Self
    where
        E: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            energy: Arc::new(energy),
            gradient: Arc::new(gradient),
            growth,
        }
    }
}

impl fmt::Debug for FnPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPotential")
            .field("name", &self.name)
            .field("growth", &self.growth)
            .finish_non_exhaustive()
    }
}

impl Potential for FnPotential {
    fn energy(&self, phase: f64, x: f64) -> f64 {
        (self.energy)(phase, x)
    }
    fn gradient(&self, phase: f64, x: f64) -> f64 {
        (self.gradient)(phase, x)
    }
    fn growth(&self) -> Growth {
        self.growth
    }
    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Potentials selectable by name from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum BuiltinPotential {
    Example { psi: f64 },
    Quartic { depth: f64 },
}

impl BuiltinPotential {
    pub const NAMES: [&'static str; 2] = ["example", "quartic"];

    pub fn build(&self) -> Result<Arc<dyn Potential>> {
        Ok(match *self {
            BuiltinPotential::Example { psi } => Arc::new(ExamplePotential::new(psi)?),
            BuiltinPotential::Quartic { depth } => Arc::new(QuarticPotential::new(depth)?),
        })
    }
}

// ---------------------------------------------------------------------------
// Depth profiles

pub type DepthFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const PROFILE_GRID: usize = 4096;

/// Infimum and supremum of one depth function over a period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrema {
    pub inf: f64,
    pub sup: f64,
    pub arg_inf: f64,
    pub arg_sup: f64,
}

impl Extrema {
    pub fn is_constant(&self) -> bool {
        self.sup - self.inf <= 1e-12 * self.sup.abs().max(1.0)
    }
}

/// The two barrier-depth functions over one period.
///
/// `phase_shift` is the lag `phi` with `D_{-1}(t) = D_1(t + phi)`, when the
/// two curves are translates of each other.
#[derive(Clone)]
pub struct DepthProfile {
    minus: DepthFn,
    plus: DepthFn,
    extrema: [Extrema; 2],
    phase_shift: Option<f64>,
}

impl fmt::Debug for DepthProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DepthProfile")
            .field("extrema", &self.extrema)
            .field("phase_shift", &self.phase_shift)
            .finish_non_exhaustive()
    }
}

impl DepthProfile {
    /// Depths `U(t, 0) - U(t, +-1)` of a potential.
    pub fn from_potential(p: Arc<dyn Potential>) -> Result<Self> {
        let pm = Arc::clone(&p);
        let minus: DepthFn = Arc::new(move |t| pm.energy(t, 0.0) - pm.energy(t, -1.0));
        let plus: DepthFn = Arc::new(move |t| p.energy(t, 0.0) - p.energy(t, 1.0));
        Self::build(minus, plus)
    }

    /// Profile from two 1-periodic depth functions. The closures receive
    /// reduced phases.
    pub fn from_fns<M, P>(minus: M, plus: P) -> Result<Self>
    where
        M: Fn(f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(Arc::new(minus), Arc::new(plus))
    }

    fn build(minus: DepthFn, plus: DepthFn) -> Result<Self> {
        let ex_minus = scan_extrema(&minus);
        let ex_plus = scan_extrema(&plus);
        for (well, ex) in [(Well::Minus, ex_minus), (Well::Plus, ex_plus)] {
            if !ex.inf.is_finite() || !ex.sup.is_finite() {
                return Err(Error::AssumptionViolation(format!("depth of well {well} is not finite")));
            }
            if ex.inf <= 0.0 {
                return Err(Error::AssumptionViolation(format!(
                    "depth of well {well} reaches {} at phase {}",
                    ex.inf, ex.arg_inf
                )));
            }
        }
        let mut profile = Self {
            minus,
            plus,
            extrema: [ex_minus, ex_plus],
            phase_shift: None,
        };
        profile.phase_shift = profile.detect_phase_shift();
        Ok(profile)
    }

    #[inline]
    pub fn depth(&self, well: Well, t: f64) -> f64 {
        let t = reduce_phase(t);
        match well {
            Well::Minus => (self.minus)(t),
            Well::Plus => (self.plus)(t),
        }
    }

    pub fn extrema(&self, well: Well) -> Extrema {
        self.extrema[well.index()]
    }

    pub fn phase_shift(&self) -> Option<f64> {
        self.phase_shift
    }

    /// The profile reparametrised as `t -> D_i(t + shift)`.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        let (m, p) = (Arc::clone(&self.minus), Arc::clone(&self.plus));
        Self::from_fns(
            move |t| m(reduce_phase(t + shift)),
            move |t| p(reduce_phase(t + shift)),
        )
    }

    /// The profile with both depths multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let (m, p) = (Arc::clone(&self.minus), Arc::clone(&self.plus));
        Self::from_fns(move |t| factor * m(t), move |t| factor * p(t))
    }

    fn detect_phase_shift(&self) -> Option<f64> {
        let [m, p] = self.extrema;
        if m.is_constant() || p.is_constant() {
            return None;
        }
        let phi = reduce_phase(p.arg_sup - m.arg_sup);
        let scale = m.sup.abs().max(1.0);
        let n = 1024;
        let fits = (0..n).all(|k| {
            let t = k as f64 / n as f64;
            (self.depth(Well::Minus, t) - self.depth(Well::Plus, t + phi)).abs() <= 1e-8 * scale
        });
        (fits && phi > 1e-9 && phi < 1.0 - 1e-9).then_some(phi)
    }
}

fn scan_extrema(f: &DepthFn) -> Extrema {
    let n = PROFILE_GRID;
    let step = 1.0 / n as f64;
    let (mut kmin, mut kmax) = (0, 0);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..n {
        let v = f(k as f64 * step);
        if v < vmin {
            vmin = v;
            kmin = k;
        }
        if v > vmax {
            vmax = v;
            kmax = k;
        }
    }
    let eval = |t: f64| f(reduce_phase(t));
    let refine = |k: usize, sign: f64, v: f64| {
        let c = k as f64 * step;
        let (t, fv) = golden_section_min(|t| sign * eval(t), c - step, c + step, 1e-13);
        if sign * v <= fv {
            (c, v)
        } else {
            (reduce_phase(t), sign * fv)
        }
    };
    let (arg_inf, inf) = refine(kmin, 1.0, vmin);
    let (arg_sup, sup) = refine(kmax, -1.0, vmax);
    Extrema { inf, sup, arg_inf, arg_sup }
}

// ---------------------------------------------------------------------------
// Validation

/// Resolution of the validation grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationGrid {
    pub time_points: usize,
    pub space_points: usize,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        Self { time_points: 1024, space_points: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub potential: String,
    pub region: (f64, f64),
    pub checks: Vec<Check>,
    /// Largest observed `|d^2 U / dx^2|` over the region (drift Lipschitz bound).
    pub drift_lipschitz: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const EQ_TOL: f64 = 1e-8;

/// Grid-based check of the standing assumptions. Failures are reported in
/// the returned report; only a too-coarse grid is an error.
pub fn validate_potential(p: &dyn Potential, grid: ValidationGrid) -> Result<ValidationReport> {
    if grid.time_points < 64 || grid.space_points < 64 {
        return Err(Error::InvalidParameter(format!(
            "validation grid {}x{} is below 64 points",
            grid.time_points, grid.space_points
        )));
    }
    let Growth { k1, k2 } = p.growth();
    if !(k1 > 0.0 && k2 > 0.0) {
        return Err(Error::InvalidParameter(format!("growth constants k1 = {k1}, k2 = {k2} must be positive")));
    }
    let (lo, hi) = (-k1 - 2.0, k1 + 2.0);
    let nt = grid.time_points;
    let nx = grid.space_points;
    let dx = (hi - lo) / (nx - 1) as f64;
    let times: Vec<f64> = (0..nt).map(|k| k as f64 / nt as f64).collect();
    let xs: Vec<f64> = (0..nx).map(|k| lo + k as f64 * dx).collect();

    let mut crit_fail: Option<String> = None;
    let mut growth_fail: Option<String> = None;
    let mut lipschitz: f64 = 0.0;
    for &t in &times {
        for c in [-1.0, 0.0, 1.0] {
            let g = p.gradient(t, c);
            if g.abs() > EQ_TOL && crit_fail.is_none() {
                crit_fail = Some(format!("gradient {g:e} at critical point x = {c}, t = {t}"));
            }
        }
        let mut prev: Option<f64> = None;
        for &x in &xs {
            let g = p.gradient(t, x);
            if let Some(gp) = prev {
                lipschitz = lipschitz.max((g - gp).abs() / dx);
            }
            prev = Some(g);
            let near_critical = [-1.0, 0.0, 1.0].iter().any(|c: &f64| (x - c).abs() < 1.5 * dx);
            if !near_critical && crit_fail.is_none() {
                let expected = if x < -1.0 || (0.0 < x && x < 1.0) { -1.0 } else { 1.0 };
                if !(g * expected > 0.0) {
                    crit_fail = Some(format!("gradient {g:e} has the wrong sign at x = {x}, t = {t}"));
                }
            }
            if growth_fail.is_none() {
                if x <= -k1 && g > -k2 {
                    growth_fail = Some(format!("gradient {g} > -K2 at x = {x}, t = {t}"));
                } else if x >= k1 && g < k2 {
                    growth_fail = Some(format!("gradient {g} < K2 at x = {x}, t = {t}"));
                }
            }
        }
    }

    let mut checks = Vec::new();
    checks.push(Check {
        name: "critical_points",
        passed: crit_fail.is_none(),
        detail: crit_fail.unwrap_or_else(|| "gradient vanishes only at -1, 0, 1".into()),
    });
    let growth_detail = growth_fail
        .clone()
        .unwrap_or_else(|| format!("|dU/dx| >= {k2} beyond |x| >= {k1} on [{lo}, {hi}]"));
    checks.push(Check { name: "growth", passed: growth_fail.is_none(), detail: growth_detail.clone() });
    checks.push(Check {
        name: "tight_level_sets",
        passed: growth_fail.is_none(),
        detail: format!("implied by the growth bound: {growth_detail}"),
    });

    // Depths.
    let mut depth_fail = None;
    let mut mono_fail = None;
    for well in Well::BOTH {
        let values: Vec<f64> = times
            .iter()
            .map(|&t| p.energy(t, 0.0) - p.energy(t, well.position()))
            .collect();
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            depth_fail.get_or_insert(format!("D_{well}({}) = {v}", times[k]));
        }
        if let Err(msg) = monotone_between_extrema(&values) {
            mono_fail.get_or_insert(format!("D_{well}: {msg}"));
        }
    }
    checks.push(Check {
        name: "depth_positive",
        passed: depth_fail.is_none(),
        detail: depth_fail.unwrap_or_else(|| "both depths stay positive".into()),
    });
    checks.push(Check {
        name: "depth_monotone",
        passed: mono_fail.is_none(),
        detail: mono_fail.unwrap_or_else(|| "one global maximum and minimum per period, strictly monotone between".into()),
    });

    // Energy / gradient consistency on a coarser sub-grid.
    let fd_step = 1e-4;
    let mut worst: f64 = 0.0;
    let mut worst_at = (0.0, 0.0);
    for &t in times.iter().step_by((nt / 64).max(1)) {
        for &x in xs.iter().step_by((nx / 256).max(1)) {
            if x.abs() < 2.0 * fd_step {
                continue;
            }
            let fd = (p.energy(t, x + fd_step) - p.energy(t, x - fd_step)) / (2.0 * fd_step);
            let g = p.gradient(t, x);
            let err = (fd - g).abs() / (1.0 + g.abs());
            if err > worst {
                worst = err;
                worst_at = (t, x);
            }
        }
    }
    checks.push(Check {
        name: "gradient_consistency",
        passed: worst <= 1e-6,
        detail: format!("max relative finite-difference mismatch {worst:e} at (t, x) = {worst_at:?}"),
    });

    // Periodicity: the jump across the period boundary must look like an
    // ordinary grid step.
    let mut wrap_jump: f64 = 0.0;
    let mut step_jump: f64 = 0.0;
    for &x in xs.iter().step_by((nx / 64).max(1)) {
        wrap_jump = wrap_jump.max((p.energy(times[nt - 1], x) - p.energy(0.0, x)).abs());
        for w in times.windows(2) {
            step_jump = step_jump.max((p.energy(w[1], x) - p.energy(w[0], x)).abs());
        }
    }
    checks.push(Check {
        name: "periodicity",
        passed: wrap_jump <= 4.0 * step_jump + 1e-12,
        detail: format!("jump across the period boundary {wrap_jump:e}, largest interior step {step_jump:e}"),
    });

    Ok(ValidationReport {
        potential: p.name(),
        region: (lo, hi),
        checks,
        drift_lipschitz: lipschitz,
    })
}

/// Cyclic sequence check: exactly one strict rise and one strict fall, or a
/// constant sequence.
fn monotone_between_extrema(values: &[f64]) -> std::result::Result<(), String> {
    let n = values.len();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-14 * scale;
    let signs: Vec<i8> = (0..n)
        .map(|k| {
            let d = values[(k + 1) % n] - values[k];
            if d > tol {
                1
            } else if d < -tol {
                -1
            } else {
                0
            }
        })
        .collect();
    if signs.iter().all(|&s| s == 0) {
        return Ok(());
    }
    // Plateaus of two or more flat steps break strict monotonicity.
    for k in 0..n {
        if signs[k] == 0 && signs[(k + 1) % n] == 0 {
            return Err(format!("flat stretch at grid index {k}"));
        }
    }
    let nonzero: Vec<i8> = signs.into_iter().filter(|&s| s != 0).collect();
    let changes = (0..nonzero.len())
        .filter(|&k| nonzero[k] != nonzero[(k + 1) % nonzero.len()])
        .count();
    if changes == 2 {
        Ok(())
    } else {
        Err(format!("{changes} monotonicity changes per period (expected 2)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ExamplePotential {
        ExamplePotential::new(0.0).unwrap()
    }

    #[test]
    fn saddle_energy_vanishes() {
        let p = example();
        assert_eq!(eval_potential(&p, 0.3, 0.0).unwrap(), 0.0);
        let q = ExamplePotential::new(0.2).unwrap();
        for k in 0..16 {
            assert_eq!(q.energy(k as f64 / 16.0, 0.0), 0.0);
        }
    }

    #[test]
    fn phase_reduction_is_periodic() {
        let p = example();
        for x in [-2.0, -0.4, 0.7, 1.3] {
            assert_eq!(eval_potential(&p, 0.0, x).unwrap(), eval_potential(&p, 1.0, x).unwrap());
            assert_eq!(eval_potential(&p, 0.375, x).unwrap(), eval_potential(&p, 3.375, x).unwrap());
            assert_eq!(eval_gradient(&p, 0.625, x).unwrap(), eval_gradient(&p, -0.375, x).unwrap());
        }
        assert_eq!(reduce_phase(-1e-20), 0.0);
        assert!(reduce_phase(-0.25) == 0.75);
    }

    #[test]
    fn non_finite_inputs_are_domain_errors() {
        let p = example();
        assert!(matches!(eval_potential(&p, f64::NAN, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(eval_gradient(&p, 0.0, f64::INFINITY), Err(Error::Domain { .. })));
    }

    #[test]
    fn gradient_vanishes_at_critical_points() {
        for psi in [0.0, 0.1, 0.24] {
            let p = ExamplePotential::new(psi).unwrap();
            for k in 0..50 {
                let t = k as f64 / 50.0;
                for c in [-1.0, 0.0, 1.0] {
                    assert!(p.gradient(t, c).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn growth_bound_beyond_k1() {
        let p = example();
        let Growth { k1, k2 } = p.growth();
        for k in 0..100 {
            let t = k as f64 / 100.0;
            assert!(p.gradient(t, -k1 - 1.0) <= -k2);
            assert!(p.gradient(t, k1 + 1.0) >= k2);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let p = example();
        let (t, x, h) = (0.17, 0.5, 1e-5);
        let fd = (p.energy(t, x + h) - p.energy(t, x - h)) / (2.0 * h);
        let g = p.gradient(t, x);
        assert!(((fd - g) / g).abs() < 1e-6, "fd {fd} vs {g}");
    }

    #[test]
    fn psi_range_is_enforced() {
        assert!(ExamplePotential::new(0.25).is_err());
        assert!(ExamplePotential::new(-0.01).is_err());
        assert!(ExamplePotential::new(0.3).is_err());
    }

    #[test]
    fn constant_depth_double() {
        let q = QuarticPotential::new(0.4).unwrap();
        for k in 0..10 {
            let t = k as f64 / 10.0;
            for w in Well::BOTH {
                assert!((depth(&q, w, t).unwrap() - 0.4).abs() < 1e-15);
            }
        }
        let prof = DepthProfile::from_potential(Arc::new(q)).unwrap();
        assert!(prof.extrema(Well::Minus).is_constant());
        assert_eq!(prof.phase_shift(), None);
    }

    #[test]
    fn non_positive_depth_is_rejected() {
        let flat = FnPotential::new("flat", |_, _| 0.0, |_, _| 0.0, Growth { k1: 1.5, k2: 1.0 });
        assert!(matches!(depth(&flat, Well::Plus, 0.2), Err(Error::AssumptionViolation(_))));
        assert!(DepthProfile::from_potential(Arc::new(flat)).is_err());
    }

    #[test]
    fn example_phase_shift_is_detected() {
        for psi in [0.0, 0.1] {
            let p = Arc::new(ExamplePotential::new(psi).unwrap());
            let prof = DepthProfile::from_potential(p).unwrap();
            // D_{-1}(t) = D_1(t + phi) with phi = 1/2 - 2 psi (mod 1)
            let phi = prof.phase_shift().unwrap();
            assert!((phi - reduce_phase(0.5 - 2.0 * psi)).abs() < 1e-7, "phi = {phi}");
        }
    }

    #[test]
    fn monotone_sequence_classification() {
        let sine: Vec<f64> = (0..64).map(|k| (2.0 * PI * k as f64 / 64.0).sin()).collect();
        assert!(monotone_between_extrema(&sine).is_ok());
        let double: Vec<f64> = (0..64).map(|k| (4.0 * PI * k as f64 / 64.0).sin()).collect();
        assert!(monotone_between_extrema(&double).is_err());
        assert!(monotone_between_extrema(&[1.0; 16]).is_ok());
    }
}
