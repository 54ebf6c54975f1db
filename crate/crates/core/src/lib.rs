//! Distribution-aware mean estimation (DAME) under user-level local
//! differential privacy.
//!
//! Each of `n` users holds `m_u` samples in `[-1, 1]`, where `m_u` is drawn
//! from a known size law `M`. The crate provides:
//!
//! * [`distributions`]: the size law `M` and the data law `μ`,
//! * [`mechanisms`]: k-hot randomized response and Laplace noise with exact
//!   privacy-loss audits,
//! * [`protocol`]: the two-phase localise-then-estimate protocol,
//! * [`bounds`]: the minimax lower/upper risk bounds and the `m̃` solver,
//! * [`experiments`]: the Monte Carlo risk harness, baselines and benchmark
//!   presets,
//! * [`cli`]: the `dame` command-line front end.

pub mod bounds;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod mechanisms;
pub mod protocol;
pub mod seeding;

pub use error::{Error, Result};
