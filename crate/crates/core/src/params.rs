//! Embedded nonlinear parameters `m = (a, K_l)` and their bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PARAM_NAMES: [&str; 2] = ["a", "K_l"];

/// Freundlich exponent `a` and Langmuir constant `K_l` (l/mg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub k_l: f64,
}

impl ModelParams {
    pub const LEN: usize = 2;

    pub fn new(a: f64, k_l: f64) -> Self {
        Self { a, k_l }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.a, self.k_l]
    }

    pub fn from_slice(m: &[f64]) -> Result<Self> {
        match m {
            [a, k_l] => Ok(Self { a: *a, k_l: *k_l }),
            _ => Err(Error::Dimension(format!("expected {} parameters, got {}", Self::LEN, m.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("bounds have different lengths".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::Config(format!("bound {i}: lower {} is not below upper {}", lower[i], upper[i])));
        }
        Ok(Self { lower, upper })
    }

    /// `a ∈ [0.25, 0.75]`, `K_l ∈ [30, 150]`.
    pub fn prior() -> Self {
        Self { lower: vec![0.25, 30.0], upper: vec![0.75, 150.0] }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, m: &[f64]) -> bool {
        m.iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    pub fn contains_strictly(&self, m: &[f64]) -> bool {
        m.iter().enumerate().all(|(i, v)| *v > self.lower[i] && *v < self.upper[i])
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}
