//! Dispatch of configured experiments to the core modules.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use resonance_core::analysis::{
    quality_exponent, resonance_interval, resonance_point, resonance_point_h, ResonanceBounds,
};
use resonance_core::chain::{interspike_histogram, ChainEstimate, ChainParams, InterspikeHistogram, TwoStateChain};
use resonance_core::numerics::stats::binomial_se;
use resonance_core::sde::{cell_seed, estimate_window_probability, rate_curve, Diffusion, RateEstimate, SimParams};
use resonance_core::spectral::{
    exit_law_check, freeze, kramers_check, principal_eigenvalue, FreezeMode, FrozenPotential,
};
use resonance_core::{validate_potential, DepthProfile, Error as CoreError, Potential, ValidationGrid, Well};
use serde_json::json;
use thiserror::Error;

use crate::config::{ExperimentConfig, Freeze, Kind, MuGrid};
use crate::output::{num, opt, Output, Table};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] CoreError),
    #[error("{failed} of {total} cells failed (strict mode)")]
    Strict { failed: usize, total: usize },
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Run `config`, writing into `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<(), RunError> {
    let mut output = Output::create(out).map_err(|e| RunError::Config(format!("cannot create {}: {e}", out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    let result = pool.install(|| dispatch(config, &mut output));
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => e.to_string(),
    };
    output.finish(config, &status)?;
    result
}

fn dispatch(config: &ExperimentConfig, out: &mut Output) -> Result<(), RunError> {
    let potential = config.potential.build().map_err(|e| RunError::Config(e.to_string()))?;
    out.line(format!("potential: {}", potential.name()));
    match config.kind {
        Kind::Validate => validate(config, potential, out),
        Kind::Analyze => analyze(config, potential, out),
        Kind::ChainSweep => chain_sweep(config, potential, out),
        Kind::SdeSweep => sde_sweep(config, potential, out),
        Kind::Spectral => spectral(config, potential, out),
        Kind::ResonanceScan => resonance_scan(config, potential, out),
        Kind::Compare => compare(config, potential, out),
    }
}

fn mu_values(config: &ExperimentConfig, bounds: &ResonanceBounds) -> Result<Vec<f64>, RunError> {
    match &config.mu {
        MuGrid::List(v) => Ok(v.clone()),
        MuGrid::Points(n) => {
            if bounds.empty {
                return Err(RunError::Config(
                    "the resonance interval is empty; give `mu_list` explicitly".into(),
                ));
            }
            let (lo, hi) = bounds.interior(0.1);
            Ok(match *n {
                1 => vec![0.5 * (lo + hi)],
                n => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
            })
        }
    }
}

/// Record per-cell failures; in strict mode any failure aborts the run.
fn finish_cells(config: &ExperimentConfig, out: &mut Output, errors: Table, total: usize) -> Result<(), RunError> {
    let failed = errors.rows.len();
    out.csv("errors.csv", &errors)?;
    out.line(format!("cells: {total}, failed: {failed}"));
    if config.strict && failed > 0 {
        return Err(RunError::Strict { failed, total });
    }
    Ok(())
}

fn depth_plot(out: &mut Output, profile: &DepthProfile, mu_line: Option<f64>) -> Result<(), RunError> {
    let mut t = Table::new(&["t", "D_minus", "D_plus", "mu_line"]);
    let n = 512;
    for k in 0..=n {
        let s = k as f64 / n as f64;
        t.push(vec![num(s), num(profile.depth(Well::Minus, s)), num(profile.depth(Well::Plus, s)), opt(mu_line)]);
    }
    out.plotdata("depth_profile.dat", &t)?;
    Ok(())
}

fn validate(config: &ExperimentConfig, potential: Arc<dyn Potential>, out: &mut Output) -> Result<(), RunError> {
    let report = validate_potential(&*potential, ValidationGrid::default())?;
    let mut t = Table::new(&["check", "passed", "detail"]);
    for c in &report.checks {
        t.push(vec![c.name.to_string(), c.passed.to_string(), c.detail.clone()]);
        out.line(format!("{:<22} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail));
    }
    out.csv("validation.csv", &t)?;
    out.line(format!("drift Lipschitz bound: {}", report.drift_lipschitz));
    if !report.passed() {
        return Err(CoreError::AssumptionViolation("validation checks failed".into()).into());
    }
    let profile = DepthProfile::from_potential(potential)?;
    let mu_line = resonance_point(&profile, &config.h_list).ok().map(|r| r.mu_r);
    depth_plot(out, &profile, mu_line)
}

fn analyze(config: &ExperimentConfig, potential: Arc<dyn Potential>, out: &mut Output) -> Result<(), RunError> {
    let profile = DepthProfile::from_potential(potential)?;
    let bounds = resonance_interval(&profile);
    out.line(format!("resonance interval: ]{}, {}[ (empty: {})", bounds.lower, bounds.upper, bounds.empty));
    out.line(format!("phase shift D_-1(t) = D_1(t + phi): {}", opt(profile.phase_shift())));
    if bounds.empty {
        out.json("resonance.json", &json!({ "interval": bounds }))?;
        depth_plot(out, &profile, None)?;
        return Err(CoreError::EmptyInterval { lo: bounds.lower, hi: bounds.upper }.into());
    }
    let rp = resonance_point(&profile, &config.h_list)?;
    let mut th = Table::new(&["h", "mu_R_h", "F_min", "optimum"]);
    for s in &rp.samples {
        th.push(vec![num(s.h), num(s.mu), num(s.value), format!("{:?}", s.optimum).to_lowercase()]);
    }
    out.csv("resonance_h.csv", &th)?;
    out.line(format!("mu_R ({:?}): {}", rp.method, rp.mu_r).to_lowercase());
    out.line(format!("  inflection: {}", opt(rp.inflection.map(|i| i.depth))));
    out.line(format!("  extrapolated: {} (order {})", opt(rp.extrapolated), opt(rp.order)));
    if let Some(note) = &rp.inflection_note {
        out.line(format!("  inflection unavailable: {note}"));
    }

    let mus = mu_values(config, &bounds)?;
    let mut tf = Table::new(&["mu", "h", "F", "well", "a_minus", "a_plus", "clipped"]);
    let mut errors = Table::new(&["mu", "error"]);
    for &mu in &mus {
        match quality_exponent(&profile, mu, config.h) {
            Ok(q) => tf.push(vec![
                num(mu),
                num(config.h),
                num(q.value),
                q.well.to_string(),
                num(q.transition_phases[0]),
                num(q.transition_phases[1]),
                q.clipped.to_string(),
            ]),
            Err(e) => errors.push(vec![num(mu), e.to_string()]),
        }
    }
    out.csv("quality_exponent.csv", &tf)?;
    out.json(
        "resonance.json",
        &json!({ "interval": bounds, "phase_shift": profile.phase_shift(), "resonance_point": rp }),
    )?;
    depth_plot(out, &profile, Some(rp.mu_r))?;
    finish_cells(config, out, errors, mus.len())
}

fn chain_sweep(config: &ExperimentConfig, potential: Arc<dyn Potential>, out: &mut Output) -> Result<(), RunError> {
    let profile = DepthProfile::from_potential(potential)?;
    let mus = mu_values(config, &resonance_interval(&profile))?;
    let cells: Vec<(usize, usize)> =
        (0..config.eps_list.len()).flat_map(|i| (0..mus.len()).map(move |j| (i, j))).collect();
    struct Cell {
        quality: ChainEstimate,
        samples: Vec<[String; 6]>,
        spikes: Option<InterspikeHistogram>,
    }
    let results: Vec<Result<Cell, CoreError>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (eps, mu) = (config.eps_list[i], mus[j]);
            let seed = cell_seed(config.seed, i, j);
            let chain = TwoStateChain::new(&profile, ChainParams::new(eps, mu, config.h))?;
            let quality = chain.quality()?;
            let mut samples = Vec::new();
            if config.samples > 0 {
                for well in Well::BOTH {
                    let w = chain.window(well);
                    let phases = chain.sample_phases(well, config.samples, seed)?;
                    let hits = phases.iter().filter(|&&x| x >= w.lo && x <= w.hi).count();
                    let exact = chain.window_probability(well)?;
                    let freq = hits as f64 / config.samples as f64;
                    let se = binomial_se(exact, config.samples);
                    samples.push([num(eps), num(mu), well.to_string(), num(freq), num(exact), num(se)]);
                }
            }
            let spikes = if config.spikes > 0 {
                Some(interspike_histogram(&chain, config.spikes, seed, config.max_periods, config.bins_per_period)?)
            } else {
                None
            };
            Ok(Cell { quality, samples, spikes })
        })
        .collect();

    let mut t = Table::new(&["epsilon", "mu", "h", "N_exact", "rate", "F_theory"]);
    let mut ts = Table::new(&["epsilon", "mu", "well", "window_frequency", "window_probability", "standard_error"]);
    let mut errors = Table::new(&["epsilon", "mu", "error"]);
    for (&(i, j), r) in cells.iter().zip(results) {
        let (eps, mu) = (config.eps_list[i], mus[j]);
        match r {
            Ok(cell) => {
                let q = cell.quality;
                t.push(vec![num(eps), num(mu), num(config.h), num(q.n_exact), num(q.rate), opt(q.theory)]);
                for row in cell.samples {
                    ts.push(row.to_vec());
                }
                if let Some(h) = cell.spikes {
                    let mut d = Table::new(&["bin_lo", "bin_hi", "count"]);
                    for (lo, hi, c) in h.durations.rows() {
                        d.push(vec![num(lo), num(hi), c.to_string()]);
                    }
                    out.plotdata(&format!("interspike_e{i}_m{j}.dat"), &d)?;
                    let mut p = Table::new(&["bin_lo", "bin_hi", "count"]);
                    for (lo, hi, c) in h.phases.rows() {
                        p.push(vec![num(lo), num(hi), c.to_string()]);
                    }
                    out.plotdata(&format!("transition_phase_e{i}_m{j}.dat"), &p)?;
                }
            }
            Err(e) => errors.push(vec![num(eps), num(mu), e.to_string()]),
        }
    }
    out.csv("chain_sweep.csv", &t)?;
    if config.samples > 0 {
        out.csv("chain_samples.csv", &ts)?;
    }
    out.line("epsilon mu N_exact rate F_theory");
    for row in &t.rows {
        out.line(format!("{} {} {} {} {}", row[0], row[1], row[3], row[4], row[5]));
    }
    finish_cells(config, out, errors, cells.len())
}

fn base_params(config: &ExperimentConfig, eps: f64, mu: f64, seed: u64) -> SimParams {
    let mut p = SimParams::new(eps, mu, config.h, config.samples, seed);
    p.step = config.step;
    p.horizon = config.horizon;
    p.x_max = config.x_max;
    p
}

const SDE_HEADER: [&str; 13] = [
    "epsilon",
    "mu",
    "h",
    "n",
    "n_hit_window_minus",
    "n_hit_window_plus",
    "n_truncated",
    "n_escaped",
    "M_hat",
    "ci_lo",
    "ci_hi",
    "rate_hat",
    "F_theory",
];

fn sde_row(r: &RateEstimate) -> Vec<String> {
    let [m, p] = r.counts;
    vec![
        num(r.eps),
        num(r.mu),
        num(r.h),
        m.samples.to_string(),
        m.in_window.to_string(),
        p.in_window.to_string(),
        (m.truncated + p.truncated).to_string(),
        (m.escaped + p.escaped).to_string(),
        num(r.m_hat),
        num(r.ci.0),
        num(r.ci.1),
        num(r.rate_hat),
        opt(r.theory),
    ]
}

fn sde_sweep(config: &ExperimentConfig, potential: Arc<dyn Potential>, out: &mut Output) -> Result<(), RunError> {
    let diffusion = Diffusion::new(potential)?;
    let mus = mu_values(config, &resonance_interval(diffusion.profile()))?;
    let base = base_params(config, config.eps_list[0], mus[0], config.seed);
    let cells = rate_curve(&diffusion, &config.eps_list, &mus, config.h, &base);
    let mut t = Table::new(&SDE_HEADER);
    let mut errors = Table::new(&["epsilon", "mu", "error"]);
    for c in &cells {
        match &c.result {
            Ok(r) => t.push(sde_row(r)),
            Err(e) => errors.push(vec![num(c.eps), num(c.mu), e.to_string()]),
        }
    }
    out.csv("sde_sweep.csv", &t)?;
    out.line(format!("step: {}", opt(config.step)));
    out.line("epsilon mu M_hat rate_hat F_theory");
    for row in &t.rows {
        out.line(format!("{} {} {} {} {}", row[0], row[1], row[8], row[11], row[12]));
    }
    finish_cells(config, out, errors, cells.len())
}

fn frozen(config: &ExperimentConfig, potential: Arc<dyn Potential>) -> Result<FrozenPotential, RunError> {
    let (start, end) = config.interval;
    let mode = match config.freeze {
        Freeze::At => FreezeMode::At { t: config.t_star },
        Freeze::Inf => FreezeMode::Inf { start, end },
        Freeze::Sup => FreezeMode::Sup { start, end },
    };
    Ok(freeze(potential, mode, (config.left, config.cut))?)
}

fn spectral(config: &ExperimentConfig, potential: Arc<dyn Potential>, out: &mut Output) -> Result<(), RunError> {
    let fp = frozen(config, potential)?;
    let pp = fp.pseudopotential()?;
    out.line(format!("freeze: {:?} on [{}, {}]", fp.mode(), config.left, config.cut));
    out.line(format!("pseudopotential: ascent {} maximum {}", pp.by_ascent, pp.by_maximum));
    let table = kramers_check(&fp, &config.eps_list)?;
    let details: Vec<_> = config
        .eps_list
        .par_iter()
        .map(|&eps| principal_eigenvalue(&fp, eps, config.grid.unwrap_or_else(|| fp.auto_grid(eps))))
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(&["epsilon", "lambda", "eps_ln_lambda", "target", "gap", "grid_n"]);
    for r in &table.rows {
        t.push(vec![num(r.eps), num(r.lambda), num(r.eps_ln_lambda), num(r.target), num(r.gap), r.grid_n.to_string()]);
    }
    out.csv("kramers.csv", &t)?;
    let mut te = Table::new(&[
        "epsilon",
        "grid_n",
        "lambda",
        "lambda_bisection",
        "lambda2",
        "residual",
        "mean_exit_time",
        "truncation_change",
    ]);
    for r in &details {
        te.push(vec![
            num(r.eps),
            r.grid_n.to_string(),
            num(r.lambda),
            num(r.lambda_bisection),
            num(r.lambda2),
            num(r.residual),
            num(r.mean_exit_time),
            opt(r.truncation_change),
        ]);
    }
    out.csv("eigenvalues.csv", &te)?;
    out.line(format!("gap shrinks monotonically: {}", table.monotone));
    for r in &table.rows {
        out.line(format!("  eps {} eps ln lambda {} target {} gap {}", r.eps, r.eps_ln_lambda, r.target, r.gap));
    }
    if let Some(eps) = config.exit_eps {
        let e = exit_law_check(&fp, eps, config.exit_start, config.exit_samples, config.seed)?;
        let mut tx = Table::new(&["epsilon", "start", "samples", "mean", "std_error", "ks", "lambda", "product", "step"]);
        tx.push(vec![
            num(e.eps),
            num(e.start),
            e.samples.to_string(),
            num(e.mean),
            num(e.std_error),
            num(e.ks),
            num(e.lambda),
            num(e.product),
            num(e.step),
        ]);
        out.csv("exit_law.csv", &tx)?;
        out.line(format!("exit law: KS {} lambda x mean {}", e.ks, e.product));
    }
    Ok(())
}

fn argmin(values: &[Option<f64>]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.filter(|x| x.is_finite()).map(|x| (k, x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

fn argmin_line(out: &mut Output, label: &str, mus: &[f64], k: Option<usize>) {
    out.line(format!("argmin {label}: {}", k.map_or("none".into(), |k| num(mus[k]))));
}

fn resonance_scan(config: &ExperimentConfig, potential: Arc<dyn Potential>, out: &mut Output) -> Result<(), RunError> {
    let diffusion = Diffusion::new(potential)?;
    let profile = diffusion.profile().clone();
    let eps = config.eps.expect("validated");
    let mus = mu_values(config, &resonance_interval(&profile))?;
    let mut t = Table::new(&SDE_HEADER);
    let mut errors = Table::new(&["epsilon", "mu", "error"]);
    let mut rates = Vec::new();
    let mut theory = Vec::new();
    for (j, &mu) in mus.iter().enumerate() {
        theory.push(quality_exponent(&profile, mu, config.h).ok().map(|q| q.value));
        match estimate_window_probability(&diffusion, &base_params(config, eps, mu, cell_seed(config.seed, 0, j))) {
            Ok(r) => {
                t.push(sde_row(&r));
                rates.push(Some(r.rate_hat));
            }
            Err(e) => {
                errors.push(vec![num(eps), num(mu), e.to_string()]);
                rates.push(None);
            }
        }
    }
    out.csv("resonance_scan.csv", &t)?;
    let (km, kf) = (argmin(&rates), argmin(&theory));
    argmin_line(out, "rate_hat", &mus, km);
    argmin_line(out, "F", &mus, kf);
    if let Ok(r) = resonance_point_h(&profile, config.h, resonance_interval(&profile).interior(1e-6)) {
        out.line(format!("mu_R(h) by minimisation: {}", r.mu));
    }
    if let (Some(a), Some(b)) = (km, kf) {
        out.line(format!("argmins within one grid cell: {}", a.abs_diff(b) <= 1));
    }
    finish_cells(config, out, errors, mus.len())
}

fn compare(config: &ExperimentConfig, potential: Arc<dyn Potential>, out: &mut Output) -> Result<(), RunError> {
    let diffusion = Diffusion::new(potential)?;
    let profile = diffusion.profile().clone();
    let eps = config.eps.expect("validated");
    let mus = mu_values(config, &resonance_interval(&profile))?;
    let chain: Vec<Result<_, CoreError>> = mus
        .par_iter()
        .map(|&mu| TwoStateChain::new(&profile, ChainParams::new(eps, mu, config.h))?.quality())
        .collect();
    let mut t = Table::new(&[
        "epsilon", "mu", "h", "N_exact", "chain_rate", "M_hat", "ci_lo", "ci_hi", "rate_hat", "F_theory",
    ]);
    let mut errors = Table::new(&["epsilon", "mu", "error"]);
    let (mut chain_rates, mut mc_rates) = (Vec::new(), Vec::new());
    for (j, (&mu, c)) in mus.iter().zip(chain).enumerate() {
        let mc = estimate_window_probability(&diffusion, &base_params(config, eps, mu, cell_seed(config.seed, 0, j)));
        let c = match c {
            Ok(c) => Some(c),
            Err(e) => {
                errors.push(vec![num(eps), num(mu), format!("chain: {e}")]);
                None
            }
        };
        let m = match mc {
            Ok(m) => Some(m),
            Err(e) => {
                errors.push(vec![num(eps), num(mu), format!("diffusion: {e}")]);
                None
            }
        };
        chain_rates.push(c.map(|c| c.rate));
        mc_rates.push(m.map(|m| m.rate_hat));
        let theory = quality_exponent(&profile, mu, config.h).ok().map(|q| q.value);
        t.push(vec![
            num(eps),
            num(mu),
            num(config.h),
            opt(c.map(|c| c.n_exact)),
            opt(c.map(|c| c.rate)),
            opt(m.map(|m| m.m_hat)),
            opt(m.map(|m| m.ci.0)),
            opt(m.map(|m| m.ci.1)),
            opt(m.map(|m| m.rate_hat)),
            opt(theory),
        ]);
    }
    out.csv("compare.csv", &t)?;
    let (kc, km) = (argmin(&chain_rates), argmin(&mc_rates));
    argmin_line(out, "chain", &mus, kc);
    argmin_line(out, "diffusion", &mus, km);
    if let (Some(a), Some(b)) = (kc, km) {
        out.line(format!("argmins within one grid cell: {}", a.abs_diff(b) <= 1));
    }
    finish_cells(config, out, errors, mus.len())
}
