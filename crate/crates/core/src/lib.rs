//! Accuracy-first differential privacy.
//!
//! A mechanism in this crate returns its output together with the privacy
//! bound it claims, and privacy is measured with ex-post Renyi DP:
//!
//! ```text
//! E_{(y, eps) ~ M(X')} [ exp((1 - alpha) eps) (p_X(y, eps) / p_X'(y, eps))^alpha ] <= 1
//! ```
//!
//! The crate is organised as:
//!
//! - [`accounting`]: Renyi orders, budgets, Gaussian calibration and RDP to
//!   ADP conversion.
//! - [`mechanisms`]: noise samplers, finite-outcome mechanism pairs and the
//!   post-processing operator that passes the reported bound through.
//! - [`noise_reduction`]: the sequential precision-weighted Gaussian mechanism
//!   and the Brownian mechanism, with their shared conditional law.
//! - [`composition`]: adaptive composition with a data-dependent stopping rule
//!   and the plain Gaussian and sparse-vector accuracy checks.
//! - [`verification`]: exact and Monte Carlo evaluators for the ex-post
//!   definitions, post-processing checks and counterexample search.
//! - [`pipeline`]: a small synthetic-data experiment driven by the Brownian
//!   mechanism and an accuracy threshold.
//!
//! Every stochastic routine takes an explicit [`Rng`], so all results are
//! reproducible from a seed.

pub mod accounting;
pub mod composition;
pub mod error;
pub mod mechanisms;
pub mod noise_reduction;
pub mod pipeline;
pub mod verification;

pub use error::{Error, Result};

/// The random generator used throughout the crate.
pub type Rng = rand_chacha::ChaCha20Rng;

/// Seeded generator.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent generator for sub-task `index` of a run seeded
/// with `seed`. Streams never overlap for distinct indices.
pub fn derived_rng(seed: u64, index: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}
