//! Crate-wide error type.
//!
//! Parse and evaluation errors of the expression language keep their own
//! structured types (offsets, expected tokens) and are wrapped here.

use crate::expr::{EvalError, ParseError};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    /// An exponent field produced a value <= 1 or a non-finite value.
    #[error("inadmissible exponent: value {value} at {point:?} (exponents must be finite and > 1)")]
    InadmissibleExponent { value: f64, point: Vec<f64> },

    /// Conjugate exponent requested where p(x) <= 1.
    #[error("conjugate undefined: p = {value} at {point:?} (needs p > 1)")]
    ConjugateUndefined { value: f64, point: Vec<f64> },

    /// s * p(x,x) >= n somewhere, so the critical exponent formula degenerates.
    #[error("criticality violation: s*p(x,x) = {sp} >= n = {n} at {point:?}")]
    CriticalityViolation { sp: f64, n: usize, point: Vec<f64> },

    #[error("unsupported domain: {detail}")]
    UnsupportedDomain { detail: String },

    /// A sampled boundary point is in no cover ball.
    #[error("cover failure: boundary point {point:?} lies in no ball")]
    CoverFailure { point: Vec<f64> },

    /// Partition-of-unity denominator vanished at a sample.
    #[error("incomplete cover: normalization denominator {denominator:e} < 1e-12 at {point:?}")]
    IncompleteCover { denominator: f64, point: Vec<f64> },

    #[error("invalid quadrature spec: {detail}")]
    BadQuadratureSpec { detail: String },

    /// Quadrature hit a non-finite integrand sample off the diagonal.
    #[error("non-finite integrand sample at {point:?}{}", .detail)]
    NonFiniteSample { point: Vec<f64>, detail: String },

    /// Luxemburg bracketing did not straddle rho = 1 after 200 doublings.
    #[error("bracketing failed after {doublings} doublings (modular stuck at {modular:e})")]
    BracketingFailed { doublings: u32, modular: f64 },

    /// zero_extend precondition: u must vanish on Omega \ K.
    #[error("not compactly supported: |u| = {value:e} at {point:?} outside the declared support")]
    NotCompactlySupported { value: f64, point: Vec<f64> },

    /// A point was evaluated outside a function's domain or a chart's range.
    #[error("evaluation outside domain: {detail} at {point:?}")]
    OutsideDomain { point: Vec<f64>, detail: String },

    /// Mismatched inputs (atlas/partition, domain containment, arity ...).
    #[error("mismatch: {detail}")]
    Mismatch { detail: String },

    /// A verify check refused to run because its standing hypotheses fail.
    #[error("hypothesis not met: {detail}")]
    HypothesisNotMet { detail: String },
}
