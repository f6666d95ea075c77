//! Kepler action-angle machinery, spherically symmetric Vlasov–Poisson with a
//! central point mass, exact linear flows, and phase-mixing diagnostics.
//!
//! Units are `G = M = 1` throughout; `L` always denotes the squared angular
//! momentum `|x|^2 |v|^2 - (x·v)^2`.

// negated comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diag;
pub mod effpot;
pub mod error;
pub mod field;
pub mod kepler;
pub mod linflow;
pub mod orbit;
pub mod profile;
pub mod quadrature;
pub mod vlasov;

pub use error::{Error, Result};
