//! Concentration samples on a uniform space-time grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values on a regular `nx × nt` grid, stored location-major
/// (`values[ix * nt + it]`), with a per-entry validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub nx: usize,
    pub nt: usize,
    pub x0: f64,
    pub dx: f64,
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Field {
    /// A field with every entry valid.
    pub fn new(nx: usize, nt: usize, x0: f64, dx: f64, t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * nt {
            return Err(Error::Dimension(format!(
                "expected {} values for a {nx}x{nt} grid, got {}",
                nx * nt,
                values.len()
            )));
        }
        if !(dx > 0.0 && dt > 0.0) {
            return Err(Error::Config(format!("grid spacings must be positive (dx={dx}, dt={dt})")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { term: "C".into(), row: i });
        }
        Ok(Self { nx, nt, x0, dx, t0, dt, mask: vec![true; values.len()], values })
    }

    /// Builds a field by evaluating `f(x, t)` on the grid.
    pub fn from_fn(nx: usize, nt: usize, x0: f64, dx: f64, t0: f64, dt: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * nt);
        for ix in 0..nx {
            for it in 0..nt {
                values.push(f(x0 + ix as f64 * dx, t0 + it as f64 * dt));
            }
        }
        Self { nx, nt, x0, dx, t0, dt, mask: vec![true; values.len()], values }
    }

    #[inline]
    pub fn idx(&self, ix: usize, it: usize) -> usize {
        ix * self.nt + it
    }

    #[inline]
    pub fn get(&self, ix: usize, it: usize) -> f64 {
        self.values[ix * self.nt + it]
    }

    #[inline]
    pub fn is_valid(&self, ix: usize, it: usize) -> bool {
        self.mask[ix * self.nt + it]
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x0 + ix as f64 * self.dx
    }

    pub fn t(&self, it: usize) -> f64 {
        self.t0 + it as f64 * self.dt
    }

    /// Masks out every entry strictly below `floor`.
    pub fn apply_floor(&mut self, floor: f64) {
        for (v, m) in self.values.iter().zip(self.mask.iter_mut()) {
            if *v < floor {
                *m = false;
            }
        }
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Time series at one location.
    pub fn series_t(&self, ix: usize) -> &[f64] {
        &self.values[ix * self.nt..(ix + 1) * self.nt]
    }

    pub fn mask_t(&self, ix: usize) -> &[bool] {
        &self.mask[ix * self.nt..(ix + 1) * self.nt]
    }

    /// Pointwise map over the values, keeping grid and mask.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Largest valid value, or 0 for an empty field.
    pub fn max_valid(&self) -> f64 {
        self.values.iter().zip(&self.mask).filter(|(_, m)| **m).map(|(v, _)| *v).fold(0.0, f64::max)
    }
}
