//! Variable selection for multiple linear regression.
//!
//! The crate ranks the features of a tabular dataset by several greedy
//! error-based procedures, correlation and t-test p-values; searches for
//! the minimum-cost subset of a given size; samples subsets from an
//! error-tempered distribution with a Gibbs sampler to measure how often
//! each feature takes part in low-error models; picks the number of
//! features with information criteria or p-value stopping; and validates a
//! chosen model with Monte Carlo cross-validation.
//!
//! Feature indices are 0-based in the API and 1-based in every serialized
//! or printed output.

pub mod dataset;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod ranking;
pub mod rng;
pub mod search;
pub mod selection;
mod serde_float;
pub mod stats;
pub mod validation;

pub use dataset::{Dataset, FeatureSubset};
pub use error::{Error, ErrorKind, Result};
pub use linalg::{CostSpec, FitResult};
pub use ranking::{Ranking, RankingMethod};
