//! Numerical laboratory for stationary psi-mixing sources.
//!
//! * [`process`]: finite-state stationary Markov sources (any order), their
//!   window laws, conditional laws and block transforms.
//! * [`mixing`]: psi-mixing coefficients, the mixture decomposition of
//!   conditional window laws and its diagnostics.
//! * [`simulate`]: slot-based simulation of a source from good/bad flags,
//!   exact-law verification and random codebooks.
//! * [`ratedist`]: distortion measures and block rate-distortion functions by
//!   alternating minimization.
//! * [`bounds`]: the achievable-rate bound and its convergence decomposition.
//! * [`codesim`]: Monte Carlo random-coding experiments over memoryless
//!   channels.
//! * [`export`]: CSV and text formats.

// `!(x >= 0.0)` is used on purpose: it rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod codesim;
pub mod error;
pub mod export;
pub mod mixing;
pub mod process;
pub mod ratedist;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use process::{CylinderLaw, MarkovSource};
