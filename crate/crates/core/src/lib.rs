//! Prototypical training-subset selection for feature-space anomaly detectors.
//!
//! Everything operates on precomputed embeddings: a dataset is an `N x D`
//! matrix of feature vectors with optional `±1` labels (`-1` in-distribution,
//! `+1` out-of-distribution). Scorers map a vector to a non-negative anomaly
//! score, selection strategies pick `M` training rows, and the evaluation
//! module measures how well a scorer fitted on those rows separates the two
//! classes.

pub mod cli;
pub mod covariance;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod matrix;
pub mod rng;
pub mod scorers;
pub mod selection;
pub mod synthgen;

pub use dataset::{DatasetSplit, EmbeddingDataset};
pub use error::{Error, Result};
pub use matrix::RowMatrix;
pub use scorers::{Distance, FittedScorer, ScorerKind, ScorerSpec};
