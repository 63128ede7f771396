//! Bayesian binary regression: Gaussian approximations, expectation
//! propagation, Monte Carlo samplers, tempering SMC and variable selection.

pub mod approx;
pub mod bench;
pub mod ep;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod rng;
pub mod smc;
pub mod special;
pub mod varsel;

pub use error::{Error, Result};
