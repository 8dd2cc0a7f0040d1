//! Conditional adversarial trajectory synthesis.
//!
//! Raw trajectories are aggregated into per-user spatiotemporal mobility
//! matrices, K-anonymized by constrained clustering and averaging, and
//! turned back into individual synthetic trajectories by a generator
//! trained against a conditional Wasserstein critic. The crate also ships
//! the geomasking baselines, mobility metrics, privacy attacks and the
//! batch pipeline used to compare them.

pub mod error;
pub mod attacks;
pub mod baselines;
pub mod catcrt;
pub mod catgen;
pub mod kama;
pub mod metrics;
mod flow;
pub mod mobility;
pub mod nn;
pub mod pipeline;
pub mod provenance;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
