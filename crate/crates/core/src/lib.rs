//! Laboratory library for 1D total-variation compressed sensing.
//!
//! The crate provides piecewise-constant signal models with separation
//! constants, the signal-dependent binary tree and non-dyadic Haar
//! transform built from a gradient support, three estimators for the
//! conic Gaussian mean width of `||grad(.)||_1` at a signal, a
//! primal-dual TV-minimization solver, and phase-transition / stability
//! experiment drivers.

pub mod experiments;
pub mod gradient;
pub mod haar;
pub mod signals;
pub mod solver;
pub mod tree;
pub mod width;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("resolution too coarse: n = {n} but the function has {s} jumps (need n >= s + 1)")]
    ResolutionTooCoarse { n: usize, s: usize },
    #[error("constant signal has no jump discontinuities")]
    NoJumps,
    #[error("separation too small: delta = {delta} < 8 s / n = {bound}")]
    SeparationTooSmall { delta: f64, bound: f64 },
    #[error("infeasible input: {0}")]
    InfeasibleInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
