//! Pool-based open-set active learning over feature-vector pools.
//!
//! Each query round runs a two-stage selection: a feature-space stage that
//! scores unlabeled samples by regularized Mahalanobis distance to the
//! labeled target-class clusters minus the distance to k-means clusters of
//! previously queried non-target samples, then an entropy stage that keeps
//! the most uncertain half of the candidates under the current classifier.
//! The engine simulates the annotation oracle, retrains a softmax probe each
//! round, and reports per-round precision, recall and test accuracy along
//! with the random / uncertainty / certainty / coreset baselines.

pub mod config;
pub mod engine;
pub mod error;
pub mod ftss;
pub mod kmeans;
pub mod linalg;
pub mod pool;
pub mod probe;
pub mod strategies;

pub use error::{Error, Result};
