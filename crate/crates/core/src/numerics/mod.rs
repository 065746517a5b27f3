//! Small numerical building blocks shared by the analysis, chain and spectral
//! modules: quadrature, one-dimensional search, statistics and seeding.

pub mod optimize;
pub mod quad;
pub mod seed;
pub mod stats;
