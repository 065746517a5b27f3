//! Numerics for stochastic resonance in periodically forced double-well
//! diffusions: depth profiles and resonance quantities, Monte Carlo escape
//! statistics, the reduced two-state chain and frozen-potential eigenvalues.

pub mod error;
pub mod numerics;
pub mod potential;
pub mod analysis;
pub mod chain;
pub mod sde;
pub mod spectral;

pub use error::{Error, Result};
pub use potential::{
    depth, eval_gradient, eval_potential, reduce_phase, validate_potential, BuiltinPotential,
    DepthProfile, ExamplePotential, Extrema, FnPotential, Growth, Potential, QuarticPotential,
    ValidationGrid, ValidationReport, Well,
};
