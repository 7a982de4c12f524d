//! Robust isotonic regression via M-estimation.
//!
//! Fits a nondecreasing step function to `(t, x)` pairs by minimizing
//! `sum rho((x_j - g(t_j)) / sigma)` over piecewise-constant nondecreasing
//! functions, for a bounded monotone score family (Huber and smoothed
//! variants) with a plug-in robust scale. Alongside the solver the crate
//! provides the asymptotic-variance machinery of the n^{1/3} limit law
//! (slope at zero of the greatest convex minorant of Brownian motion with
//! parabolic drift), influence and breakdown diagnostics, and a Monte Carlo
//! harness for finite-sample mean-squared-error studies.

pub mod asymptotics;
pub mod montecarlo;
pub mod psi;
mod quad;
mod rngutil;
pub mod robustness;
pub mod scale;
pub mod solver;

pub use asymptotics::{AvarReport, ChernoffConfig, ChernoffSample, ErrorModel, Gcm};
pub use psi::ScoreFamily;
pub use scale::{ScaleEstimate, ScaleMethod};
pub use solver::{Block, DesignSample, IsotonicFit};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IsoError {
    /// Scale estimation has no positive root (all inputs zero, or the
    /// nonzero fraction does not exceed the target `b`).
    #[error("degenerate sample: no positive scale root exists")]
    DegenerateSample,
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("empty block")]
    EmptyBlock,
    /// `E_G psi'(u/sigma)` vanishes: the score is flat where the error
    /// density puts its mass.
    #[error("non-identifiable: E[psi'(u/sigma)] is numerically zero")]
    NonIdentifiable,
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, IsoError>;
