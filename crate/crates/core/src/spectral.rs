//! Frozen potentials and the principal Dirichlet eigenvalue of
//! `L u = eps u'' - Q' u'` on `[-L, d]`, absorbing at `d` and reflecting at
//! `-L`.
//!
//! The operator is discretised as a birth-death generator on a uniform grid.
//! The default scheme uses exponentially fitted rates
//!
//! ```text
//! up_j   = eps/dx^2 exp(-(Q_{j+1} - Q_j) / (2 eps))
//! down_j = eps/dx^2 exp(-(Q_{j-1} - Q_j) / (2 eps))
//! ```
//!
//! whose symmetrisation by `exp(-Q/(2 eps))` is the Schroedinger form with
//! off-diagonal `-eps/dx^2` and diagonal `~ 2 eps/dx^2 + Q'^2/(4 eps) - Q''/2`.
//! Linear solves with the generator use the flux recursion of a reversible
//! birth-death chain, which involves no subtractions, so eigenvalues far
//! below the matrix norm keep full relative accuracy.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{finite, Error, Result};
use crate::numerics::optimize::{bisect, golden_section_min};
use crate::numerics::quad::{adaptive_simpson, gauss_legendre};
use crate::numerics::seed::sample_rng;
use crate::numerics::stats::ks_unit_exponential;
use crate::potential::{reduce_phase, Potential};

/// Time grid resolution for inf/sup freezing.
pub const FREEZE_TIME_POINTS: usize = 256;
/// Minimum spatial grid size.
pub const MIN_GRID: usize = 512;
const EXIT_STREAM: u64 = 0xE417;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FreezeMode {
    /// `Q' = dU/dx(t, .)`.
    At { t: f64 },
    /// `R_I = inf_{t in I} dU/dx(t, .)`.
    Inf { start: f64, end: f64 },
    /// `V_I = sup_{t in I} dU/dx(t, .)`.
    Sup { start: f64, end: f64 },
}

/// A time-independent potential obtained by freezing `U`.
#[derive(Debug, Clone)]
pub struct FrozenPotential {
    potential: Arc<dyn Potential>,
    mode: FreezeMode,
    times: Vec<f64>,
    left: f64,
    d: f64,
    t_ref: f64,
}

/// Freeze `potential` on the domain `[left, d]`.
pub fn freeze(potential: Arc<dyn Potential>, mode: FreezeMode, (left, d): (f64, f64)) -> Result<FrozenPotential> {
    let left = finite("left truncation", left)?;
    let d = finite("cut", d)?;
    if d == 0.0 {
        return Err(Error::InvalidParameter("the cut d must differ from the saddle 0".into()));
    }
    if !(d > -1.0) {
        return Err(Error::InvalidParameter(format!("cut d = {d} must lie right of the minimum -1")));
    }
    if !(left < -1.0) {
        return Err(Error::InvalidParameter(format!("left truncation {left} must lie left of -1")));
    }
    let (times, t_ref) = match mode {
        FreezeMode::At { t } => (vec![reduce_phase(finite("freeze time", t)?)], reduce_phase(t)),
        FreezeMode::Inf { start, end } | FreezeMode::Sup { start, end } => {
            let (start, end) = (finite("interval start", start)?, finite("interval end", end)?);
            if !(end >= start && end - start <= 1.0) {
                return Err(Error::InvalidParameter(format!("interval [{start}, {end}] is not within one period")));
            }
            let n = FREEZE_TIME_POINTS;
            let ts = if end == start {
                vec![reduce_phase(start)]
            } else {
                (0..n).map(|k| reduce_phase(start + (end - start) * k as f64 / (n - 1) as f64)).collect()
            };
            (ts, reduce_phase(start))
        }
    };
    let fp = FrozenPotential { potential, mode, times, left, d, t_ref };
    fp.check_structure()?;
    Ok(fp)
}

impl FrozenPotential {
    pub fn mode(&self) -> FreezeMode {
        self.mode
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.left, self.d)
    }

    pub fn cut(&self) -> f64 {
        self.d
    }

    /// The same freezing on `[left, d]`.
    pub fn with_left(&self, left: f64) -> Result<Self> {
        let fp = Self { left, ..self.clone() };
        fp.check_structure()?;
        Ok(fp)
    }

    /// Frozen drift `Q'(x)`.
    pub fn q_prime(&self, x: f64) -> f64 {
        let p = &self.potential;
        match self.mode {
            FreezeMode::At { .. } => p.gradient(self.times[0], x),
            FreezeMode::Inf { .. } => self.times.iter().map(|&t| p.gradient(t, x)).fold(f64::INFINITY, f64::min),
            FreezeMode::Sup { .. } => self.times.iter().map(|&t| p.gradient(t, x)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `Q(x) = U(t_ref, -1) + int_{-1}^x Q'`.
    pub fn q(&self, x: f64) -> Result<f64> {
        let base = self.potential.energy(self.t_ref, -1.0);
        Ok(base + adaptive_simpson(|y| self.q_prime(y), -1.0, x, 1e-13)?.value)
    }

    /// Largest `|Q'|` on the domain, sampled.
    pub fn max_abs_drift(&self) -> f64 {
        let n = 4096;
        (0..=n)
            .map(|k| self.q_prime(self.left + (self.d - self.left) * k as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|Q''|` on the domain, from differences of `Q'`.
    pub fn drift_lipschitz(&self) -> f64 {
        let n = 4096;
        let dx = (self.d - self.left) / n as f64;
        let mut prev = self.q_prime(self.left);
        let mut l: f64 = 0.0;
        for k in 1..=n {
            let g = self.q_prime(self.left + k as f64 * dx);
            l = l.max((g - prev).abs() / dx);
            prev = g;
        }
        l
    }

    /// Smallest grid with spacing `<= eps / max |Q'|`, at least [`MIN_GRID`].
    pub fn auto_grid(&self, eps: f64) -> usize {
        let need = ((self.d - self.left) * self.max_abs_drift() / eps).ceil() as usize;
        need.max(MIN_GRID)
    }

    fn check_structure(&self) -> Result<()> {
        let (lo, hi) = (self.left, self.d);
        for c in [-1.0, 0.0, 1.0] {
            if c >= lo && c <= hi {
                let g = self.q_prime(c);
                if g.abs() > 1e-8 {
                    return Err(Error::Structure(format!("Q'({c}) = {g:e} does not vanish")));
                }
            }
        }
        let n = 4096;
        for k in 0..=n {
            let x = lo + (hi - lo) * k as f64 / n as f64;
            if [-1.0, 0.0, 1.0].iter().any(|c: &f64| (x - c).abs() < 1e-3) {
                continue;
            }
            let expected = if x < -1.0 || (0.0 < x && x < 1.0) { -1.0 } else { 1.0 };
            let g = self.q_prime(x);
            if !(g * expected > 0.0) {
                return Err(Error::Structure(format!("Q'({x}) = {g:e} has the wrong sign")));
            }
        }
        let k2 = self.potential.growth().k2;
        let g_left = self.q_prime(lo);
        if !(g_left <= -k2) {
            return Err(Error::Structure(format!("Q'({lo}) = {g_left} is not below -K2 = {}", -k2)));
        }
        let barrier = self.pseudopotential()?.by_maximum;
        let wall = self.q(lo)? - self.q(-1.0)?;
        if !(wall >= barrier + 1.0) {
            return Err(Error::Structure(format!(
                "left wall Q(-L) - Q(-1) = {wall} does not dominate the barrier {barrier}"
            )));
        }
        Ok(())
    }

    /// Barrier `max_{[-1, d]} Q - Q(-1)` by two independent routes.
    pub fn pseudopotential(&self) -> Result<Pseudopotential> {
        let d = self.d;
        // Route 1: integrate Q' over the ascent from -1 to the first
        // down-crossing of Q' (the saddle) or to d.
        let n = 4096;
        let mut ascent_end = d;
        let mut prev = -1.0;
        for k in 1..=n {
            let x = -1.0 + (d + 1.0) * k as f64 / n as f64;
            if x > -1.0 + 1e-9 && self.q_prime(x) < 0.0 && self.q_prime(prev) >= 0.0 && prev > -1.0 {
                ascent_end = bisect(|y| self.q_prime(y), prev, x, 1e-15);
                break;
            }
            prev = x;
        }
        let by_ascent = adaptive_simpson(|y| self.q_prime(y), -1.0, ascent_end, 1e-13)?.value;
        // Route 2: maximum of Q from cumulative Gauss-Legendre sums.
        let cells = 2048;
        let h = (d + 1.0) / cells as f64;
        let mut q = 0.0;
        let (mut best, mut best_k) = (0.0_f64, 0usize);
        for k in 0..cells {
            let a = -1.0 + k as f64 * h;
            q += gauss_legendre(|y| self.q_prime(y), a, a + h, 1);
            if q > best {
                best = q;
                best_k = k + 1;
            }
        }
        let by_maximum = if best_k == 0 {
            0.0
        } else {
            let c = -1.0 + best_k as f64 * h;
            let base = best - gauss_legendre(|y| self.q_prime(y), c - h, c, 1);
            let lo = c - h;
            let hi = (c + h).min(d);
            let rel = |x: f64| base + gauss_legendre(|y| self.q_prime(y), lo, x, 4);
            let (_, v) = golden_section_min(|x| -rel(x), lo, hi, 1e-12);
            (-v).max(best)
        };
        Ok(Pseudopotential { by_ascent, by_maximum, ascent_end })
    }
}

/// Height of the barrier between `-1` and the cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pseudopotential {
    /// `int_{-1}^{s} Q'` with `s` the saddle or the cut.
    pub by_ascent: f64,
    /// `max_{[-1, d]} Q - Q(-1)` from tabulated `Q`.
    pub by_maximum: f64,
    pub ascent_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exponentially fitted rates (symmetric Schroedinger form).
    Fitted,
    /// Plain central differences of the non-symmetric operator.
    Central,
}

/// A reversible birth-death generator on nodes `0..n` with absorption past
/// `n - 1`.
#[derive(Debug, Clone)]
struct BirthDeath {
    up: Vec<f64>,
    down: Vec<f64>,
    /// `ln pi_j` up to a constant.
    log_pi: Vec<f64>,
}

impl BirthDeath {
    fn new(up: Vec<f64>, down: Vec<f64>) -> Self {
        let n = up.len();
        let mut log_pi = vec![0.0; n];
        for j in 1..n {
            log_pi[j] = log_pi[j - 1] + (up[j - 1] / down[j]).ln();
        }
        Self { up, down, log_pi }
    }

    fn len(&self) -> usize {
        self.up.len()
    }

    /// Solve `A x = b` for `A = -generator`, `b >= 0`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut flux = vec![0.0; n];
        let mut acc = 0.0;
        for j in 0..n {
            let carry = if j == 0 { 0.0 } else { acc * (self.log_pi[j - 1] - self.log_pi[j]).exp() };
            acc = b[j] + carry;
            flux[j] = acc / self.up[j];
        }
        let mut x = vec![0.0; n];
        let mut s = 0.0;
        for j in (0..n).rev() {
            s += flux[j];
            x[j] = s;
        }
        x
    }

    fn weights(&self) -> Vec<f64> {
        let top = self.log_pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.log_pi.iter().map(|l| (l - top).exp()).collect()
    }

    /// Symmetric tridiagonal form: diagonal and off-diagonal.
    fn symmetric(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let diag: Vec<f64> = (0..n).map(|j| self.up[j] + self.down[j]).collect();
        let off: Vec<f64> = (0..n - 1).map(|j| -(self.up[j] * self.down[j + 1]).sqrt()).collect();
        (diag, off)
    }
}

/// Number of eigenvalues of the symmetric tridiagonal `(diag, off)` below
/// `sigma`.
fn sturm_count(diag: &[f64], off: &[f64], sigma: f64) -> usize {
    let mut count = 0;
    let mut q = 0.0;
    for j in 0..diag.len() {
        q = if j == 0 { diag[0] - sigma } else { diag[j] - sigma - off[j - 1] * off[j - 1] / q };
        if q == 0.0 {
            q = -f64::EPSILON * (diag[j].abs() + sigma.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest `sigma` with at least `k` eigenvalues below it, by bisection.
fn sturm_eigenvalue(diag: &[f64], off: &[f64], k: usize, upper: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi || hi - lo <= 1e-15 * hi {
            break;
        }
        if sturm_count(diag, off, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenOptions {
    pub scheme: Scheme,
    /// Recompute with the left end `-L` moved to `-2L` and fail on a
    /// relative change above 1%.
    pub truncation_check: bool,
    pub residual_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { scheme: Scheme::Fitted, truncation_check: true, residual_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenResult {
    pub lambda: f64,
    pub eps: f64,
    pub grid_n: usize,
    pub spacing: f64,
    /// `||(H - lambda) y|| / (||H||_inf ||y||)` in the symmetric form.
    pub residual: f64,
    /// Barrier `max_{[-1,d]} Q - Q(-1)`.
    pub barrier: f64,
    /// Second eigenvalue, by Sturm bisection.
    pub lambda2: f64,
    /// First eigenvalue by Sturm bisection (absolute accuracy only).
    pub lambda_bisection: f64,
    /// Mean exit time of the discrete chain started at the node nearest -1.
    pub mean_exit_time: f64,
    pub truncation_change: Option<f64>,
    pub scheme: Scheme,
    pub iterations: usize,
}

pub fn principal_eigenvalue(fp: &FrozenPotential, eps: f64, grid_n: usize) -> Result<EigenResult> {
    principal_eigenvalue_with(fp, eps, grid_n, EigenOptions::default())
}

pub fn principal_eigenvalue_with(fp: &FrozenPotential, eps: f64, grid_n: usize, opts: EigenOptions) -> Result<EigenResult> {
    let eps = finite("eps", eps)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    if grid_n < MIN_GRID {
        return Err(Error::InvalidParameter(format!("grid size {grid_n} below {MIN_GRID}")));
    }
    let (left, d) = fp.domain();
    let dx = (d - left) / grid_n as f64;
    let max_drift = fp.max_abs_drift();
    if dx > eps / max_drift * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "grid spacing {dx:e} exceeds eps / max|Q'| = {:e}",
            eps / max_drift
        )));
    }
    let chain = assemble(fp, eps, grid_n, opts.scheme)?;
    let (lambda, x, iterations) = inverse_iteration(&chain)?;
    let (diag, off) = chain.symmetric();
    let w = chain.weights();
    let y: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| xi * wi.sqrt()).collect();
    let norm_h = (0..diag.len())
        .map(|j| diag[j].abs() + if j > 0 { off[j - 1].abs() } else { 0.0 } + off.get(j).map_or(0.0, |o| o.abs()))
        .fold(0.0, f64::max);
    let mut r2 = 0.0;
    let mut y2 = 0.0;
    for j in 0..y.len() {
        let mut hy = diag[j] * y[j];
        if j > 0 {
            hy += off[j - 1] * y[j - 1];
        }
        if j + 1 < y.len() {
            hy += off[j] * y[j + 1];
        }
        r2 += (hy - lambda * y[j]).powi(2);
        y2 += y[j] * y[j];
    }
    let residual = r2.sqrt() / (norm_h * y2.sqrt());
    if !(residual <= opts.residual_tol) {
        return Err(Error::Eigen(format!("residual {residual:e} above {:e}", opts.residual_tol)));
    }
    let lambda2 = sturm_eigenvalue(&diag, &off, 2, norm_h);
    let lambda_bisection = sturm_eigenvalue(&diag, &off, 1, norm_h);
    if sturm_count(&diag, &off, 0.5 * lambda2) != 1 || lambda >= 0.5 * lambda2 {
        return Err(Error::Eigen(format!(
            "inverse iteration value {lambda:e} is not the isolated lowest eigenvalue (second {lambda2:e})"
        )));
    }
    let start = ((-1.0 - left) / dx).round() as usize;
    let ones = vec![1.0; chain.len()];
    let mean_exit_time = chain.solve(&ones)[start.min(chain.len() - 1)];
    let barrier = fp.pseudopotential()?.by_maximum;
    let truncation_change = if opts.truncation_check {
        let wide = fp.with_left(2.0 * left)?;
        let n_wide = wide.auto_grid(eps).max(((d - wide.left) / dx).ceil() as usize);
        let inner = principal_eigenvalue_with(&wide, eps, n_wide, EigenOptions { truncation_check: false, ..opts })?;
        let change = (inner.lambda - lambda).abs() / lambda;
        if change > 0.01 {
            return Err(Error::Truncation { rel_change: change });
        }
        Some(change)
    } else {
        None
    };
    Ok(EigenResult {
        lambda,
        eps,
        grid_n,
        spacing: dx,
        residual,
        barrier,
        lambda2,
        lambda_bisection,
        mean_exit_time,
        truncation_change,
        scheme: opts.scheme,
        iterations,
    })
}

fn assemble(fp: &FrozenPotential, eps: f64, n: usize, scheme: Scheme) -> Result<BirthDeath> {
    let (left, d) = fp.domain();
    let dx = (d - left) / n as f64;
    let base = eps / (dx * dx);
    let xs: Vec<f64> = (0..=n).map(|j| left + j as f64 * dx).collect();
    let (up, down) = match scheme {
        Scheme::Fitted => {
            let steps: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|j| gauss_legendre(|y| fp.q_prime(y), xs[j], xs[j + 1], 1))
                .collect();
            let up: Vec<f64> = steps.iter().map(|s| base * (-s / (2.0 * eps)).exp()).collect();
            let down: Vec<f64> = (0..n)
                .map(|j| if j == 0 { 0.0 } else { base * (steps[j - 1] / (2.0 * eps)).exp() })
                .collect();
            (up, down)
        }
        Scheme::Central => {
            let mut up = Vec::with_capacity(n);
            let mut down = Vec::with_capacity(n);
            for (j, &x) in xs.iter().enumerate().take(n) {
                let adv = fp.q_prime(x) / (2.0 * dx);
                let (u, w) = (base - adv, base + adv);
                if !(u > 0.0 && w > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "central scheme loses positivity at x = {x}: cell Peclet number above 1"
                    )));
                }
                up.push(u);
                down.push(if j == 0 { 0.0 } else { w });
            }
            (up, down)
        }
    };
    Ok(BirthDeath::new(up, down))
}

/// Inverse iteration from the constant vector with the `pi`-weighted
/// Rayleigh quotient.
fn inverse_iteration(chain: &BirthDeath) -> Result<(f64, Vec<f64>, usize)> {
    let w = chain.weights();
    let mut x = vec![1.0; chain.len()];
    let mut lambda = f64::NAN;
    for it in 1..=500 {
        let y = chain.solve(&x);
        let (mut yx, mut yy) = (0.0, 0.0);
        for j in 0..y.len() {
            yx += w[j] * y[j] * x[j];
            yy += w[j] * y[j] * y[j];
        }
        let next = yx / yy;
        let top = y.iter().cloned().fold(0.0, f64::max);
        if !(top > 0.0 && top.is_finite() && next.is_finite()) {
            return Err(Error::Eigen("inverse iteration produced a non-finite iterate".into()));
        }
        x = y.into_iter().map(|v| v / top).collect();
        if (next - lambda).abs() <= 1e-15 * next {
            return Ok((next, x, it));
        }
        lambda = next;
    }
    Ok((lambda, x, 500))
}

/// One row of the eigenvalue asymptotics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KramersRow {
    pub eps: f64,
    pub lambda: f64,
    pub eps_ln_lambda: f64,
    /// `-(max Q - Q(-1))`.
    pub target: f64,
    pub gap: f64,
    pub grid_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KramersTable {
    pub rows: Vec<KramersRow>,
    /// The gap shrinks strictly along the (decreasing) noise list.
    pub monotone: bool,
}

pub fn kramers_check(fp: &FrozenPotential, eps_list: &[f64]) -> Result<KramersTable> {
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("noise list must be strictly decreasing".into()));
    }
    let target = -fp.pseudopotential()?.by_maximum;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let n = fp.auto_grid(eps);
        let r = principal_eigenvalue(fp, eps, n)?;
        let eps_ln_lambda = eps * r.lambda.ln();
        rows.push(KramersRow { eps, lambda: r.lambda, eps_ln_lambda, target, gap: (eps_ln_lambda - target).abs(), grid_n: n });
    }
    let monotone = rows.windows(2).all(|w| w[1].gap < w[0].gap);
    Ok(KramersTable { rows, monotone })
}

/// Exit statistics of the frozen diffusion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitLaw {
    pub eps: f64,
    pub start: f64,
    pub samples: usize,
    pub mean: f64,
    pub std_error: f64,
    /// KS distance of `tau / mean` from the unit exponential.
    pub ks: f64,
    pub lambda: f64,
    /// `lambda * mean`.
    pub product: f64,
    pub step: f64,
    #[serde(skip)]
    pub normalized: Vec<f64>,
}

pub const EXIT_STEP_BUDGET: u64 = 100_000_000;

/// Simulate `dY = -Q'(Y) dt + sqrt(2 eps) dW` from `start` until `Y >= d`.
pub fn exit_law_check(fp: &FrozenPotential, eps: f64, start: f64, n_samples: usize, seed: u64) -> Result<ExitLaw> {
    let eps = finite("eps", eps)?;
    let start = finite("start", start)?;
    let d = fp.cut();
    if !(start < d && start > fp.left) {
        return Err(Error::InvalidParameter(format!("start {start} outside ({}, {d})", fp.left)));
    }
    if n_samples < 2 {
        return Err(Error::InvalidParameter("need at least two exits".into()));
    }
    let eig = principal_eigenvalue(fp, eps, fp.auto_grid(eps))?;
    let dt = eps.min(1.0) / (10.0 * fp.drift_lipschitz());
    let noise = (2.0 * eps * dt).sqrt();
    let times: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(seed, EXIT_STREAM, k);
            let (mut t, mut y) = (0.0, start);
            for _ in 0..EXIT_STEP_BUDGET {
                let z: f64 = rng.sample(StandardNormal);
                let next = y - fp.q_prime(y) * dt + noise * z;
                if !next.is_finite() {
                    return Err(Error::BlowUp { time: t, position: y });
                }
                if next >= d {
                    return Ok(t + dt * (d - y) / (next - y));
                }
                t += dt;
                y = next;
            }
            Err(Error::StepBudget { budget: EXIT_STEP_BUDGET })
        })
        .collect::<Result<_>>()?;
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let normalized: Vec<f64> = times.iter().map(|t| t / mean).collect();
    Ok(ExitLaw {
        eps,
        start,
        samples: n_samples,
        mean,
        std_error: (var / n).sqrt(),
        ks: ks_unit_exponential(&normalized),
        lambda: eig.lambda,
        product: eig.lambda * mean,
        step: dt,
        normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{ExamplePotential, FnPotential, Growth};

    fn example() -> Arc<dyn Potential> {
        Arc::new(ExamplePotential::new(0.0).unwrap())
    }

    #[test]
    fn sturm_counts_diagonal_matrix() {
        let diag = [1.0, 2.0, 3.0];
        let off = [0.0, 0.0];
        assert_eq!(sturm_count(&diag, &off, 2.5), 2);
        assert!((sturm_eigenvalue(&diag, &off, 2, 10.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flux_solver_matches_dense_solve() {
        let up = vec![2.0, 1.5, 0.7, 3.0];
        let down = vec![0.0, 0.5, 1.2, 0.9];
        let chain = BirthDeath::new(up.clone(), down.clone());
        let b = [0.3, 1.0, 0.0, 2.0];
        let x = chain.solve(&b);
        for j in 0..4 {
            let mut ax = (up[j] + down[j]) * x[j];
            if j > 0 {
                ax -= down[j] * x[j - 1];
            }
            if j < 3 {
                ax -= up[j] * x[j + 1];
            }
            assert!((ax - b[j]).abs() < 1e-12, "row {j}: {ax} vs {}", b[j]);
        }
    }

    #[test]
    fn degenerate_interval_equals_pointwise() {
        let p = example();
        let at = freeze(Arc::clone(&p), FreezeMode::At { t: 0.3 }, (-2.0, 0.5)).unwrap();
        let inf = freeze(Arc::clone(&p), FreezeMode::Inf { start: 0.3, end: 0.3 }, (-2.0, 0.5)).unwrap();
        let sup = freeze(p, FreezeMode::Sup { start: 0.3, end: 0.3 }, (-2.0, 0.5)).unwrap();
        for x in [-1.7, -0.5, 0.2] {
            assert_eq!(at.q_prime(x), inf.q_prime(x));
            assert_eq!(at.q_prime(x), sup.q_prime(x));
        }
    }

    #[test]
    fn inf_and_sup_sandwich_the_drift() {
        let p = example();
        let (s, e) = (0.1, 0.4);
        let r = freeze(Arc::clone(&p), FreezeMode::Inf { start: s, end: e }, (-2.0, 0.5)).unwrap();
        let v = freeze(Arc::clone(&p), FreezeMode::Sup { start: s, end: e }, (-2.0, 0.5)).unwrap();
        assert_eq!(r.q_prime(-1.0), 0.0);
        assert_eq!(v.q_prime(-1.0), 0.0);
        for k in 0..=255 {
            let t = s + (e - s) * k as f64 / 255.0;
            for x in [-1.9, -1.2, -0.6, 0.3] {
                let g = p.gradient(t, x);
                assert!(r.q_prime(x) <= g && g <= v.q_prime(x));
            }
        }
    }

    #[test]
    fn cut_at_saddle_is_rejected() {
        assert!(matches!(freeze(example(), FreezeMode::At { t: 0.0 }, (-2.0, 0.0)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn lost_structure_is_reported() {
        // A single well: the frozen drift has no saddle.
        let single = FnPotential::new(
            "single",
            |_, x: f64| 0.5 * (x + 1.0).powi(2),
            |_, x: f64| x + 1.0,
            Growth { k1: 1.5, k2: 0.5 },
        );
        let r = freeze(Arc::new(single), FreezeMode::At { t: 0.0 }, (-2.0, 0.5));
        assert!(matches!(r, Err(Error::Structure(_))));
    }

    #[test]
    fn pseudopotential_routes_agree() {
        let fp = freeze(example(), FreezeMode::At { t: 0.1 }, (-2.0, 0.5)).unwrap();
        let v = fp.pseudopotential().unwrap();
        assert!((v.by_ascent - v.by_maximum).abs() < 1e-8, "{v:?}");
        // U(t, 0) - U(t, -1) = D_{-1}(t)
        let depth = 1.0 / 3.0 + (2.0 / 15.0) * (2.0 * std::f64::consts::PI * (0.1 - 0.25)).cos();
        assert!((v.by_maximum - depth).abs() < 1e-8);
        assert!(v.ascent_end.abs() < 1e-12);
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let fp = freeze(example(), FreezeMode::At { t: 0.0 }, (-2.0, 0.5)).unwrap();
        assert!(principal_eigenvalue(&fp, 0.1, 100).is_err());
        assert!(principal_eigenvalue(&fp, 0.01, 600).is_err());
    }
}
