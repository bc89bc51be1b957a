//! Partial linear eigenvalue statistics of GUE and Wigner random matrices.
//!
//! The crate computes three families of quantities and cross-checks them
//! against each other:
//!
//! - exact finite-n GUE formulas through the Christoffel-Darboux kernel
//!   (`determinantal`),
//! - limiting variance and covariance functionals of the statistics
//!   (`limits`),
//! - seeded Monte Carlo experiments over sampled spectra (`ensemble`,
//!   `eigensolver`, `ples`, `harness`).
//!
//! The statistics themselves are partial sums over an ordered spectrum:
//! threshold sums A_n[f;u], rank sums B_n[f;k], the interpolated partial-sum
//! process S_n[f;t], and the counting function N_n(-inf,u].

pub mod cli;
pub mod determinantal;
pub mod ensemble;
pub mod eigensolver;
pub mod error;
pub mod harness;
pub mod limits;
pub mod ples;
pub mod semicircle;
pub mod testfn;

pub(crate) mod quad;

pub use error::{Error, Result};

/// Half-width delta of the working interval (-2-delta, 2+delta) around the
/// spectrum's limiting support. Thresholds u must stay in [-2+delta, 2-delta].
pub const DEFAULT_DELTA: f64 = 0.5;

/// Margin of the time band [TIME_DELTA, 1-TIME_DELTA] on which the partial-sum
/// process lives. Distinct from DEFAULT_DELTA: the band must contain the
/// working grids (0.3 to 0.7), while the spectral margin is a tail-truncation
/// width. Any fixed value in (0, 0.3] is mathematically valid; 0.05 keeps the
/// quantiles gamma_t comfortably inside the bulk.
pub const TIME_DELTA: f64 = 0.05;
