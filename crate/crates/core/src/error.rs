use thiserror::Error;

use crate::potential::Well;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-finite {what}: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("potential is not admissible: {0}")]
    AssumptionViolation(String),

    #[error("transition window does not fit: h = {h} but a_mu = {a_mu}")]
    Window { h: f64, a_mu: f64 },

    #[error("transition phase for well {well} is infinite at mu = {mu}")]
    NeverCrosses { well: Well, mu: f64 },

    #[error("empty interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("inflection method unavailable: {0}")]
    NoInflection(String),

    #[error("second difference changes sign {} times on the decreasing branch at {locations:?}", locations.len())]
    MultipleInflections { locations: Vec<f64> },

    #[error("numerical blow-up at t = {time}, x = {position}")]
    BlowUp { time: f64, position: f64 },

    #[error("degenerate estimate for well {well}: {truncated} truncated and {escaped} escaped of {samples}")]
    DegenerateEstimate {
        well: Well,
        samples: usize,
        truncated: usize,
        escaped: usize,
    },

    #[error("quadrature did not converge: error estimate {achieved:e} > tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("frozen drift lost its double-well structure: {0}")]
    Structure(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("left truncation not negligible: relative change {rel_change:e}")]
    Truncation { rel_change: f64 },

    #[error("step budget of {budget} exhausted")]
    StepBudget { budget: u64 },
}

pub(crate) fn finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain { what, value })
    }
}
