//! Numerical kernel for fractional Sobolev spaces with variable exponent.
//!
//! The crate computes Luxemburg norms and variable-exponent Gagliardo
//! seminorms by composite quadrature plus monotone bisection, and realizes
//! the constructive operator calculus around them: trace, zero extension,
//! even reflection, truncation by smooth cutoffs, chart transfer, the full
//! boundary-chart extension operator, and the kernel/image decomposition it
//! induces. The `verify` module turns every inequality the library relies on
//! into a seeded, machine-checkable case family.
//!
//! Layering, bottom up:
//!
//! * [`expr`]: the expression language used for functions and exponent
//!   fields in configs,
//! * [`geometry`]: domains, charts, cutoffs, boundary covers, partitions of
//!   unity,
//! * [`exponents`]: exponent fields p(x,y), q(x), their bounds and the
//!   admissibility checks,
//! * [`norms`]: quadrature, modulars, Luxemburg norms, Gagliardo seminorm,
//! * [`operators`]: trace/extension calculus built on all of the above,
//! * [`verify`]: empirical inequality checks and constant estimation.
//!
//! Everything is deterministic: evaluation is pure, quadrature reductions
//! use a fixed chunking independent of thread count, and random families are
//! seeded.

pub mod error;
pub mod expr;
pub mod exponents;
pub mod geometry;
pub mod norms;
pub mod operators;
pub mod verify;

pub use error::{Error, Result};
