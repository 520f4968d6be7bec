//! Feasible penalised GLS (the "GLS Lasso") for high-dimensional linear
//! regression with autoregressive errors, debiased inference on top of it,
//! and a seeded Monte Carlo harness.
//!
//! The estimation pipeline:
//!
//! 1. preliminary Lasso on `(y, X)` ([`gls::gls_lasso`]),
//! 2. AR(q) fit on the preliminary residuals with sequential order selection ([`ar`]),
//! 3. whitening of `(y, X)` with the banded operator built from `φ̂` ([`whitening`]),
//! 4. Lasso on the whitened data,
//! 5. nodewise regressions for an approximate inverse covariance ([`nodewise`]),
//! 6. one-step debiasing, confidence intervals and t-statistics ([`inference`]).
//!
//! Penalties are chosen by blocked (time-contiguous) k-fold cross-validation
//! ([`crossval`]).

pub mod ar;
pub mod commands;
pub mod crossval;
pub mod data;
pub mod error;
pub mod gls;
pub mod inference;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod metrics;
pub mod montecarlo;
pub mod nodewise;
pub mod sim;
pub mod whitening;

pub use data::{residuals, Dataset};
pub use error::{Error, Result};

/// Crate version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
