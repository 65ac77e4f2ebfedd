//! Crate-wide error type and result alias.
//!
//! Every fallible operation in this crate returns [`Result`]. Numerical
//! values carried by variants are reported as `f64` regardless of the
//! working scalar type, so error messages stay printable.

use thiserror::Error;

/// Errors produced by chain construction, functionals, solvers, and reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state space needs at least one label")]
    EmptyStateSpace,

    #[error("duplicate state label {label:?}")]
    DuplicateLabel { label: String },

    #[error("rate matrix is {rows}x{cols} but the state space has {states} states")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        states: usize,
    },

    #[error("off-diagonal rate at ({row}, {col}) is negative: {value}")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {residual:e}, exceeding the tolerance {tol:e}")]
    RowSumViolation { row: usize, residual: f64, tol: f64 },

    #[error("entry {index} of a probability vector is negative: {value}")]
    NegativeMass { index: usize, value: f64 },

    #[error("probability mass sums to {sum}, not 1 (tolerance {tol:e})")]
    MassNotNormalized { sum: f64, tol: f64 },

    #[error("generator is not irreducible")]
    NotIrreducible,

    #[error("linear solve failed: {detail}")]
    SolveFailure { detail: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("eigenvalue computation failed: {detail}")]
    EigenFailure { detail: String },

    #[error("measure entry {index} is not strictly positive: {value}")]
    NonPositiveMeasure { index: usize, value: f64 },

    #[error("trajectory has {len} points, need at least {need}")]
    TrajectoryTooShort { len: usize, need: usize },

    #[error("log-Sobolev ratio estimate is not positive: {estimate}")]
    DegenerateRatio { estimate: f64 },

    #[error("state spaces do not match: {detail}")]
    SpaceMismatch { detail: String },

    #[error("state {label:?} is not assigned to any macro-state")]
    UnassignedState { label: String },

    #[error("macro-state {label:?} has an empty level set")]
    EmptyLevelSet { label: String },

    #[error("conditional measure is undefined at macro-state {label:?} (zero marginal)")]
    UndefinedConditional { label: String },

    #[error("measure is not stationary: residual {residual:e}")]
    NotStationary { residual: f64 },

    #[error("unknown label {label:?}")]
    UnknownLabel { label: String },

    #[error("invalid time grid: {detail}")]
    BadTimeGrid { detail: &'static str },

    #[error("matrix exponential failed: {detail}")]
    ExpmFailure { detail: String },

    #[error("probability mass drifted by {drift:e} at t = {t} (limit {limit:e})")]
    MassDrift { t: f64, drift: f64, limit: f64 },

    #[error("decay window holds {points} points, need at least {need}")]
    InsufficientDecay { points: usize, need: usize },

    #[error("state count {n} is below the minimum {min}")]
    InvalidSize { n: usize, min: usize },

    #[error("marginal at macro-state {label:?} is not strictly positive: {value}")]
    NonPositiveMarginal { label: String, value: f64 },

    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("trajectories are not on the same time grid")]
    GridMismatch,

    #[error("log-Sobolev constant must be positive, got {alpha}")]
    NonPositiveAlpha { alpha: f64 },

    #[error("missing fit: {what}")]
    MissingFit { what: &'static str },

    #[error("{have} fit points available, need at least {need}")]
    InsufficientPoints { have: usize, need: usize },

    #[error("fit values must be positive, got {value}")]
    NonPositiveValue { value: f64 },

    #[error("invalid configuration: {detail}")]
    BadConfig { detail: String },

    #[error("input contains a non-finite number ({context})")]
    NonFiniteInput { context: String },

    #[error("malformed input: {detail}")]
    Format { detail: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
