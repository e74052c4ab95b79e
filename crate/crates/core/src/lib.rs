//! Nonparametric transfer learning under covariate shift.
//!
//! The library pools labeled source and target samples into a single k-NN
//! classifier, builds simultaneous k-2k covers to decide which target labels
//! are worth requesting, selects k locally at query time by intersecting
//! confidence intervals, and ships synthetic source/target distribution pairs
//! whose transfer exponent, smoothness, and noise parameters are known in
//! closed form so that measured error rates can be checked against theory.

pub mod adaptive;
pub mod classifier;
pub mod cover;
pub mod diagnostics;
mod error;
pub mod harness;
pub mod rng;
pub mod space;
pub mod synth;

pub use error::{Error, Result};
pub use space::{ball_count, knn_indices, linf_distance, Label, MetricSpace, NnIndex, Point, TransferSample};
