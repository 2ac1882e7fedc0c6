//! Gradient EM for multi-component isotropic Gaussian mixtures.
//!
//! The crate has four parts:
//!
//! * [`mixture`] — the ground-truth model: construction, seeded sampling,
//!   responsibilities and densities computed in log space, and the closed-form
//!   Gaussian norm utilities (moments, tail bound, sub-gaussian norm,
//!   sphere-covering bound).
//! * [`em`] — population, sample, and stochastic gradient-EM iterations, the
//!   closed-form oracle gradient, and per-iteration error trajectories with a
//!   fixed component matching.
//! * [`bounds`] — closed-form convergence certificates (the gradient-stability
//!   constant, the contraction rate and radius, uniform sample-deviation
//!   bounds, restart counts) plus an empirical gradient-stability verifier.
//! * [`empirical`] — Monte-Carlo estimators for the empirical Rademacher
//!   complexity of the gradient function class and the sup gradient deviation
//!   over the contraction region, with n/d scaling studies.
//!
//! # Determinism
//!
//! Every randomized routine is a pure function of its `u64` seed. Work is
//! split into fixed-size chunks keyed by `(seed, stream)` counter-mode
//! generators (see [`rng`] and [`exec`]), and partial results are combined in
//! chunk order, so outputs are bit-identical for any thread count and with the
//! `parallel` feature disabled.

pub mod assign;
pub mod bounds;
pub mod em;
pub mod empirical;
mod error;
pub mod exec;
pub mod layout;
pub mod mixture;
pub mod rng;
mod special;
mod stacked;
pub mod stats;

pub use error::Error;
pub use mixture::{MixtureConfig, Sample, SeparationStats};
pub use stacked::Stacked;

pub type Result<T> = std::result::Result<T, Error>;
