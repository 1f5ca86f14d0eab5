//! Evolutionary pruning of fully-connected transfer-learning heads.
//!
//! The crate trains small classifier heads over pre-extracted feature
//! vectors, searches binary sparsity masks for them with a steady-state
//! genetic algorithm, and compares the result against magnitude-based
//! pruning baselines.
//!
//! Module map:
//!
//! * [`dataset`]: feature files, validation and train/test folds.
//! * [`net`]: the masked head, its SGD trainer and evaluation.
//! * [`encoding`]: chromosome kinds and their decoding into masks.
//! * [`evo`]: the genetic algorithm.
//! * [`baselines`]: reference models and magnitude pruning methods.
//! * [`harness`]: run configuration, experiment driver and reports.

pub mod baselines;
pub mod dataset;
pub mod encoding;
mod error;
pub mod evo;
pub mod harness;
pub mod net;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use ndarray;
