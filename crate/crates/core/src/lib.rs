//! Model reduction for finite-state continuous-time Markov chains.
//!
//! The crate builds coarse-grained and effective dynamics from a generator
//! and a lumping map, certifies the reduction error with relative-entropy
//! bounds, and runs multiscale convergence studies over a family of
//! timescale-separated models.
//!
//! Everything numeric is generic over the scalar type through
//! [`scalar::Real`]; the aliases at the crate root fix `f64`, which is what
//! the command-line tool and the studies use.

pub mod chain;
pub mod coarse_graining;
pub mod dynamics;
pub mod error;
pub mod error_bounds;
pub mod functionals;
pub mod io;
pub mod multiscale;
pub mod scalar;
pub mod study;

pub use error::{Error, Result};

/// Generator with `f64` rates.
pub type Generator = chain::Generator<f64>;
/// Probability vector with `f64` mass.
pub type ProbabilityVector = chain::ProbabilityVector<f64>;
/// Time grid with `f64` times.
pub type TimeGrid = dynamics::TimeGrid<f64>;
/// Trajectory with `f64` values.
pub type Trajectory = dynamics::Trajectory<f64>;
/// Log-Sobolev estimate with `f64` values.
pub type LsiEstimate = functionals::LsiEstimate<f64>;
/// Decay fit with `f64` values.
pub type DecayFit = dynamics::DecayFit<f64>;
/// Slow-fast model family with `f64` rates.
pub type MultiscaleSpec = multiscale::MultiscaleSpec<f64>;
/// Averaged limit model with `f64` rates.
pub type AveragedModel = multiscale::AveragedModel<f64>;
/// Certificate report with `f64` values.
pub type BoundReport = error_bounds::BoundReport<f64>;
/// Long-time envelope with `f64` values.
pub type LongTimeEnvelope = error_bounds::LongTimeEnvelope<f64>;
/// Study description with `f64` values.
pub type StudyConfig = study::StudyConfig<f64>;
/// Study result with `f64` values.
pub type StudyOutput = study::StudyOutput<f64>;
/// Sweep summary with `f64` values.
pub type ConvergenceReport = study::ConvergenceReport<f64>;
/// Single-ratio study run with `f64` values.
pub type EpsRun = study::EpsRun<f64>;
