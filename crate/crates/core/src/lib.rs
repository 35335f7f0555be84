//! Reciprocal (two-sided) match recommendation toolkit.
//!
//! Companies scout job seekers and seekers reply; a match needs both. The
//! crate provides:
//!
//! - [`synth`]: a synthetic marketplace with known directional probabilities,
//! - [`learners`]: logistic matrix factorization for the scout, reply and
//!   direct-match models,
//! - [`aggregate`]: predict-then-aggregate baselines,
//! - [`pseudo`] and [`meta`]: pseudo-match labels blending true matches with
//!   predicted ones, distilled into a gradient-boosted meta-model,
//! - [`eval`]: NDCG@k evaluation and cross-validated weight tuning,
//! - [`pipeline`]: the whole experiment from one [`config::ExperimentConfig`].

pub mod aggregate;
pub mod config;
pub mod domain;
pub mod error;
pub mod eval;
pub mod learners;
pub mod meta;
pub mod pipeline;
pub mod pseudo;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
