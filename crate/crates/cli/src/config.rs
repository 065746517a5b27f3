//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; lists are comma separated.
//! Every key that is not given explicitly is filled with its default and
//! listed in [`ExperimentConfig::defaults`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use resonance_core::BuiltinPotential;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate { key: String, line: usize, first: usize },
    #[error("unknown keys: {}", .0.join(", "))]
    Unknown(Vec<String>),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Validate,
    Analyze,
    SdeSweep,
    ChainSweep,
    Spectral,
    ResonanceScan,
    Compare,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::Validate,
        Kind::Analyze,
        Kind::SdeSweep,
        Kind::ChainSweep,
        Kind::Spectral,
        Kind::ResonanceScan,
        Kind::Compare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Validate => "validate",
            Kind::Analyze => "analyze",
            Kind::SdeSweep => "sde-sweep",
            Kind::ChainSweep => "chain-sweep",
            Kind::Spectral => "spectral",
            Kind::ResonanceScan => "resonance-scan",
            Kind::Compare => "compare",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kind `{s}` (expected one of {})", Kind::ALL.map(Kind::name).join(", ")))
    }
}

/// How the frozen potential is obtained in `spectral` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    At,
    Inf,
    Sup,
}

/// The mu values of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum MuGrid {
    List(Vec<f64>),
    /// `n` equally spaced points over the resonance interval with 10% of its
    /// width trimmed from each end.
    Points(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub potential: BuiltinPotential,
    pub eps_list: Vec<f64>,
    pub eps: Option<f64>,
    pub mu: MuGrid,
    pub h: f64,
    pub h_list: Vec<f64>,
    pub samples: usize,
    pub spikes: usize,
    pub bins_per_period: usize,
    pub max_periods: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub strict: bool,
    pub output: Option<PathBuf>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub x_max: f64,
    pub freeze: Freeze,
    pub t_star: f64,
    pub interval: (f64, f64),
    pub left: f64,
    pub cut: f64,
    pub grid: Option<usize>,
    pub exit_eps: Option<f64>,
    pub exit_samples: usize,
    pub exit_start: f64,
    /// Effective `key = value` pairs, defaults included.
    pub entries: BTreeMap<String, String>,
    /// Keys filled from defaults.
    pub defaults: Vec<String>,
}

/// Recognised keys and their defaults (`None`: no default).
const KEYS: &[(&str, Option<&str>)] = &[
    ("kind", None),
    ("potential", Some("example")),
    ("psi", Some("0")),
    ("depth", Some("0.25")),
    ("eps_list", None),
    ("eps", None),
    ("mu_list", None),
    ("mu_points", Some("11")),
    ("h", Some("0.05")),
    ("h_list", Some("0.08, 0.04, 0.02, 0.01, 0.005")),
    ("samples", Some("2000")),
    ("spikes", Some("10000")),
    ("bins_per_period", Some("20")),
    ("max_periods", Some("10")),
    ("seed", Some("0")),
    ("workers", None),
    ("strict", Some("false")),
    ("output", None),
    ("step", None),
    ("horizon", None),
    ("x_max", Some("3.5")),
    ("freeze", Some("at")),
    ("t_star", Some("0")),
    ("interval", Some("0, 0.1")),
    ("left", Some("-2")),
    ("cut", Some("0.5")),
    ("grid", None),
    ("exit_eps", None),
    ("exit_samples", Some("2000")),
    ("exit_start", Some("-1")),
];

struct Entry {
    value: String,
    line: usize,
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    defaults: Vec<String>,
}

impl Reader {
    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        if let Some(e) = self.entries.get(key) {
            return Some((e.value.clone(), e.line));
        }
        let default = KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d)?;
        self.defaults.push(key.to_string());
        self.entries.insert(key.to_string(), Entry { value: default.to_string(), line: 0 });
        Some((default.to_string(), 0))
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| ConfigError::Line {
                line,
                msg: format!("`{key}`: cannot parse `{v}`: {e}"),
            }),
        }
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Invalid(format!("missing required key `{key}`")))
    }

    fn list(&mut self, key: &str) -> Result<Option<(Vec<f64>, usize)>, ConfigError> {
        let Some((v, line)) = self.raw(key) else { return Ok(None) };
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let x: f64 = item.parse().map_err(|_| ConfigError::Line {
                line,
                msg: format!("`{key}`: `{item}` is not a number"),
            })?;
            if !x.is_finite() {
                return Err(ConfigError::Line { line, msg: format!("`{key}`: `{item}` is not finite") });
            }
            out.push(x);
        }
        Ok(Some((out, line)))
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }
}

fn range_error(line: usize, key: &str, msg: impl fmt::Display) -> ConfigError {
    if line == 0 {
        ConfigError::Invalid(format!("`{key}`: {msg}"))
    } else {
        ConfigError::Line { line, msg: format!("`{key}`: {msg}") }
    }
}

/// Parse and validate a configuration. `kind_override` supplies the kind
/// when it is not in the text, and must agree with it otherwise.
pub fn parse_config(text: &str, kind_override: Option<Kind>) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut unknown = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Line { line, msg: format!("expected `key = value`, found `{content}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Line { line, msg: "empty key".into() });
        }
        if !KEYS.iter().any(|(k, _)| *k == key) {
            unknown.push(format!("{key} (line {line})"));
            continue;
        }
        if let Some(first) = entries.get(key) {
            return Err(ConfigError::Duplicate { key: key.into(), line, first: first.line });
        }
        entries.insert(key.into(), Entry { value: value.into(), line });
    }
    if !unknown.is_empty() {
        return Err(ConfigError::Unknown(unknown));
    }
    let mut r = Reader { entries, defaults: Vec::new() };

    let kind = match (r.entries.get("kind").map(|e| (e.value.clone(), e.line)), kind_override) {
        (Some((v, line)), over) => {
            let k: Kind = v.parse().map_err(|msg| ConfigError::Line { line, msg })?;
            if let Some(o) = over {
                if o != k {
                    return Err(ConfigError::Line { line, msg: format!("config kind `{k}` conflicts with subcommand `{o}`") });
                }
            }
            k
        }
        (None, Some(o)) => {
            r.entries.insert("kind".into(), Entry { value: o.name().into(), line: 0 });
            o
        }
        (None, None) => return Err(ConfigError::Invalid("missing required key `kind` (or give a subcommand)".into())),
    };

    let name: String = r.required("potential")?;
    let potential = match name.as_str() {
        "example" => {
            let psi: f64 = r.required("psi")?;
            if !(0.0..0.25).contains(&psi) {
                return Err(range_error(
                    r.line("psi"),
                    "psi",
                    format!("{psi} outside [0, 1/4): the example potential requires psi in [0, 1/4)"),
                ));
            }
            BuiltinPotential::Example { psi }
        }
        "quartic" => {
            let depth: f64 = r.required("depth")?;
            if !(depth > 0.0 && depth.is_finite()) {
                return Err(range_error(r.line("depth"), "depth", format!("{depth} must be positive")));
            }
            BuiltinPotential::Quartic { depth }
        }
        other => {
            return Err(range_error(
                r.line("potential"),
                "potential",
                format!("unknown potential `{other}` (expected {})", BuiltinPotential::NAMES.join(" or ")),
            ))
        }
    };

    let needs_eps_list = matches!(kind, Kind::SdeSweep | Kind::ChainSweep | Kind::Spectral);
    let needs_eps = matches!(kind, Kind::ResonanceScan | Kind::Compare);
    let needs_mu = matches!(kind, Kind::SdeSweep | Kind::ChainSweep | Kind::ResonanceScan | Kind::Compare | Kind::Analyze);

    let eps_list = match r.list("eps_list")? {
        Some((v, line)) => {
            if v.is_empty() {
                return Err(range_error(line, "eps_list", "empty list"));
            }
            if let Some(e) = v.iter().find(|e| !(**e > 0.0)) {
                return Err(range_error(line, "eps_list", format!("{e} must be positive")));
            }
            v
        }
        None if needs_eps_list => return Err(ConfigError::Invalid(format!("`{kind}` requires `eps_list`"))),
        None => Vec::new(),
    };
    if kind == Kind::Spectral && eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(range_error(r.line("eps_list"), "eps_list", "must be strictly decreasing for spectral runs"));
    }
    let eps: Option<f64> = r.get("eps")?;
    if let Some(e) = eps {
        if !(e > 0.0 && e.is_finite()) {
            return Err(range_error(r.line("eps"), "eps", format!("{e} must be positive")));
        }
    } else if needs_eps {
        return Err(ConfigError::Invalid(format!("`{kind}` requires `eps`")));
    }

    let mu = if r.entries.contains_key("mu_list") {
        let (v, line) = r.list("mu_list")?.unwrap_or_default();
        if v.is_empty() {
            return Err(range_error(line, "mu_list", "empty mu grid"));
        }
        if let Some(m) = v.iter().find(|m| !(**m >= 0.0)) {
            return Err(range_error(line, "mu_list", format!("{m} must be non-negative")));
        }
        MuGrid::List(v)
    } else if needs_mu {
        let n: usize = r.required("mu_points")?;
        if n == 0 {
            return Err(range_error(r.line("mu_points"), "mu_points", "empty mu grid"));
        }
        MuGrid::Points(n)
    } else {
        MuGrid::Points(0)
    };

    let h: f64 = r.required("h")?;
    if !(h > 0.0 && h < 0.5) {
        return Err(range_error(r.line("h"), "h", format!("{h} outside (0, 1/2)")));
    }
    let (h_list, line) = r.list("h_list")?.unwrap_or_default();
    if h_list.is_empty() || h_list.iter().any(|x| !(*x > 0.0 && *x < 0.5)) {
        return Err(range_error(line, "h_list", "needs values in (0, 1/2)"));
    }
    if h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(range_error(line, "h_list", "must be strictly decreasing"));
    }

    let samples: usize = r.required("samples")?;
    if matches!(kind, Kind::SdeSweep | Kind::ResonanceScan | Kind::Compare) && samples < 100 {
        return Err(range_error(r.line("samples"), "samples", format!("{samples} below the minimum of 100")));
    }
    let spikes: usize = r.required("spikes")?;
    let bins_per_period: usize = r.required("bins_per_period")?;
    let max_periods: usize = r.required("max_periods")?;
    if bins_per_period == 0 || max_periods == 0 {
        return Err(ConfigError::Invalid("`bins_per_period` and `max_periods` must be positive".into()));
    }
    let seed: u64 = r.required("seed")?;
    let workers: Option<usize> = r.get("workers")?;
    if workers == Some(0) {
        return Err(range_error(r.line("workers"), "workers", "must be at least 1"));
    }
    let strict: bool = r.required("strict")?;
    let output: Option<String> = r.get("output")?;
    let step: Option<f64> = r.get("step")?;
    if let Some(s) = step {
        if !(s > 0.0 && s.is_finite()) {
            return Err(range_error(r.line("step"), "step", format!("{s} must be positive")));
        }
    }
    let horizon: Option<f64> = r.get("horizon")?;
    if let Some(s) = horizon {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(range_error(r.line("horizon"), "horizon", format!("{s} must be non-negative")));
        }
    }
    let x_max: f64 = r.required("x_max")?;

    let freeze = match r.required::<String>("freeze")?.as_str() {
        "at" => Freeze::At,
        "inf" => Freeze::Inf,
        "sup" => Freeze::Sup,
        other => {
            return Err(range_error(r.line("freeze"), "freeze", format!("`{other}` is not one of at, inf, sup")))
        }
    };
    let t_star: f64 = r.required("t_star")?;
    let (iv, line) = r.list("interval")?.unwrap_or_default();
    if iv.len() != 2 || !(iv[1] >= iv[0] && iv[1] - iv[0] <= 1.0) {
        return Err(range_error(line, "interval", "needs `start, end` with 0 <= end - start <= 1"));
    }
    let left: f64 = r.required("left")?;
    let cut: f64 = r.required("cut")?;
    let grid: Option<usize> = r.get("grid")?;
    let exit_eps: Option<f64> = r.get("exit_eps")?;
    if let Some(e) = exit_eps {
        if !(e > 0.0 && e.is_finite()) {
            return Err(range_error(r.line("exit_eps"), "exit_eps", format!("{e} must be positive")));
        }
    }
    let exit_samples: usize = r.required("exit_samples")?;
    let exit_start: f64 = r.required("exit_start")?;

    let entries = r.entries.into_iter().map(|(k, e)| (k, e.value)).collect();
    Ok(ExperimentConfig {
        kind,
        potential,
        eps_list,
        eps,
        mu,
        h,
        h_list,
        samples,
        spikes,
        bins_per_period,
        max_periods,
        seed,
        workers,
        strict,
        output: output.map(PathBuf::from),
        step,
        horizon,
        x_max,
        freeze,
        t_star,
        interval: (iv[0], iv[1]),
        left,
        cut,
        grid,
        exit_eps,
        exit_samples,
        exit_start,
        entries,
        defaults: r.defaults,
    })
}

impl ExperimentConfig {
    /// The effective configuration in the input format.
    pub fn echo(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Override the master seed, keeping the echo in sync.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.entries.insert("seed".into(), seed.to_string());
        self.defaults.retain(|k| k != "seed");
    }

    pub fn set_strict(&mut self) {
        self.strict = true;
        self.entries.insert("strict".into(), "true".into());
        self.defaults.retain(|k| k != "strict");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_applies_defaults() {
        let c = parse_config("kind = validate\npotential = example\n", None).unwrap();
        assert_eq!(c.kind, Kind::Validate);
        assert_eq!(c.potential, BuiltinPotential::Example { psi: 0.0 });
        assert!(c.defaults.contains(&"psi".to_string()));
        assert!(c.defaults.contains(&"seed".to_string()));
        assert!(c.echo().contains("psi = 0\n"));
    }

    #[test]
    fn psi_out_of_range_cites_constraint() {
        let err = parse_config("kind = analyze\npsi = 0.3\n", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("[0, 1/4)"), "{msg}");
    }

    #[test]
    fn duplicate_key_is_named() {
        let err = parse_config("kind = analyze\nh = 0.1\nh = 0.2\n", None).unwrap_err();
        assert_eq!(err, ConfigError::Duplicate { key: "h".into(), line: 3, first: 2 });
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let err = parse_config("kind = analyze\nfoo = 1\nbar = 2\n", None).unwrap_err();
        assert_eq!(err.to_string(), "unknown keys: foo (line 2), bar (line 3)");
    }

    #[test]
    fn empty_mu_grid_is_rejected() {
        let err = parse_config("kind = chain-sweep\neps_list = 0.2\nmu_list =\n", None).unwrap_err();
        assert!(err.to_string().contains("empty mu grid"));
    }

    #[test]
    fn type_errors_carry_line_numbers() {
        let err = parse_config("# header\nkind = chain-sweep\neps_list = 0.2, x\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Line { line: 3, .. }), "{err}");
        let err = parse_config("kind = analyze\nsamples = many\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Line { line: 2, .. }), "{err}");
    }

    #[test]
    fn subcommand_must_match_kind() {
        assert!(parse_config("kind = analyze\n", Some(Kind::Validate)).is_err());
        let c = parse_config("potential = example\n", Some(Kind::Validate)).unwrap();
        assert_eq!(c.kind, Kind::Validate);
    }

    #[test]
    fn echo_round_trips() {
        let c = parse_config("kind = sde-sweep\neps_list = 0.3, 0.2\nmu_list = 0.25\n", None).unwrap();
        let again = parse_config(&c.echo(), None).unwrap();
        assert_eq!(again.echo(), c.echo());
        assert!(again.defaults.is_empty());
    }
}
