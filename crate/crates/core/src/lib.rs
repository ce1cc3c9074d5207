//! Vibration-based damage identification for a four-element cantilever.
//!
//! * [`fem`]: Euler–Bernoulli element matrices, assembly, modes and FRFs.
//! * [`dataset`]: the diameter-grid damage dataset and its on-disk format.
//! * [`pbp`]: Bayesian MLP trained by probabilistic backpropagation.
//! * [`nn`]: a small deterministic CNN/LSTM engine with Adam.
//! * [`experiments`]: splits, architectures, training loops, R² and saliency.

pub mod dataset;
pub mod checkpoint;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod nn;
pub mod par;
pub mod pbp;
pub mod preprocess;

pub use error::*;
pub use par::Execution;
