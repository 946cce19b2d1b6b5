//! Tensor-compressed generalized memory polynomial (GMP) models for power
//! amplifier behavioral modeling.
//!
//! The crate covers the full experiment pipeline:
//!
//! * [`tensor`] — dense complex tensors with first-index-fastest storage,
//!   unfoldings, mode products, and a binary on-disk container;
//! * [`decomp`] — randomized sequentially-truncated HOSVD and the mode-{2,3}
//!   projection pair used to shrink identification problems;
//! * [`signal`] — 16-QAM OFDM waveform generation and a reference power
//!   amplifier with additive measurement noise;
//! * [`dataset`] — delay/envelope design sets shared by every model family;
//! * [`models`] — GMP coefficient tensors plus their CP, tensor-train, and
//!   Tucker compressed forms, with prediction, expansion, and cost formulas;
//! * [`identify`] — ridge, FISTA/PGD LASSO, alternating least squares for the
//!   compressed families, randomly-projected ALS, and the projection error
//!   bound check;
//! * [`metrics`] — NMSE, sparsity, and model comparison reports;
//! * [`config`] — experiment configuration files and hashing.

pub mod config;
pub mod dataset;
pub mod decomp;
pub mod identify;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod signal;
pub mod tensor;

mod error;

pub use error::{Error, Result};
pub use tensor::DenseTensor;

/// Complex scalar used across the crate.
pub type Complex64 = num_complex::Complex<f64>;
