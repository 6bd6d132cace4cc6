//! Truncated Euler-Maruyama schemes for SDEs driven by Brownian motion and
//! Poisson jumps, and the Monte Carlo machinery used to measure their strong
//! convergence rates, mean-square stability and asymptotic boundedness.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod model;
pub mod montecarlo;
pub mod noise;
pub mod plot;
pub mod scheme;

pub use error::{Error, Result};
