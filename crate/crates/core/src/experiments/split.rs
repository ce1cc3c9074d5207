use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    /// Fraction of the non-test samples held out for validation. Zero means
    /// no validation set.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { test_fraction: 0.30, validation_fraction: 0.30, seed: 0 }
    }
}

impl SplitSpec {
    /// 50:50 train/test with no validation set.
    pub fn half(seed: u64) -> Self {
        Self { test_fraction: 0.5, validation_fraction: 0.0, seed }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(ExperimentError::Config(format!("test_fraction {} outside (0, 1)", self.test_fraction)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(ExperimentError::Config(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    /// `(train, validation, test)` sizes for `n` samples.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let test = (self.test_fraction * n as f64).floor() as usize;
        let val = (self.validation_fraction * (n - test) as f64).floor() as usize;
        (n - test - val, val, test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded permutation of `0..n`, cut into test, validation and train in
/// that order.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Split, ExperimentError> {
    spec.validate()?;
    let (train, val, test) = spec.sizes(n);
    if train == 0 || test == 0 || (spec.validation_fraction > 0.0 && val == 0) {
        return Err(ExperimentError::Config(format!(
            "{n} samples give an empty split (train {train}, validation {val}, test {test})"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let test_idx = idx[..test].to_vec();
    let val_idx = idx[test..test + val].to_vec();
    let train_idx = idx[test + val..].to_vec();
    Ok(Split { train: train_idx, validation: val_idx, test: test_idx })
}
