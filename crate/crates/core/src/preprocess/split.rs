use serde::{Deserialize, Serialize};

use super::derivatives::{DerivPoint, DerivativeField};
use crate::error::{Error, Result};

/// Temporal split: every point of the earliest time steps goes to `train`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<DerivPoint>,
    pub test: Vec<DerivPoint>,
    pub ratio: f64,
    pub train_steps: usize,
    pub test_steps: usize,
}

/// The first `floor(ratio · n_steps)` distinct time steps form the training set.
pub fn split_train_test(deriv: &DerivativeField, ratio: f64) -> Result<DataSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let steps = deriv.time_indices();
    let n_train = (ratio * steps.len() as f64).floor() as usize;
    if n_train == 0 || n_train == steps.len() {
        return Err(Error::Empty(format!(
            "ratio {ratio} over {} time steps leaves an empty training or testing set",
            steps.len()
        )));
    }
    let cutoff = steps[n_train];
    let (train, test): (Vec<_>, Vec<_>) = deriv.points.iter().partition(|p| p.it < cutoff);
    Ok(DataSplit { train, test, ratio, train_steps: n_train, test_steps: steps.len() - n_train })
}
