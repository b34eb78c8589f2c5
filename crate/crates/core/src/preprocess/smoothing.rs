//! Local polynomial smoothing with Chebyshev re-interpolation.
//!
//! For a target sample `k`, `N_CH + 1` Chebyshev nodes (roots of
//! `T_{N_CH+1}`) are placed on `[k − n_CH, k + n_CH]`. At every node an
//! order-`N_LS` least-squares polynomial is fitted to the samples within
//! `±n_LS` of that node and evaluated there; the node values are then
//! interpolated back to `k` in barycentric form.
//!
//! Every step is linear in the samples and the node offsets relative to `k`
//! do not depend on `k`, so the whole procedure collapses to a fixed
//! convolution kernel, built once per window configuration.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::derivatives::compute_derivatives;
use crate::error::{Error, Result};
use crate::field::Field;

/// Window parameters along one axis, in grid steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisWindow {
    /// Half-width of the Chebyshev interval.
    pub n_ch: usize,
    /// Half-width of each local least-squares window.
    pub n_ls: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    /// Chebyshev interpolation degree (`N_CH + 1` nodes).
    pub ch_degree: usize,
    /// Local least-squares polynomial order.
    pub ls_order: usize,
    pub time: AxisWindow,
    pub space: AxisWindow,
    pub max_passes: usize,
    /// A further pass is applied while the third-derivative fluctuation
    /// exceeds this multiple of the clean reference.
    pub fluctuation_factor: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            ch_degree: 5,
            ls_order: 3,
            time: AxisWindow { n_ch: 120, n_ls: 120 },
            space: AxisWindow { n_ch: 6, n_ls: 6 },
            max_passes: 3,
            fluctuation_factor: 5.0,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ch_degree < 1 {
            return Err(Error::Config("smoothing ch_degree must be at least 1".into()));
        }
        for (axis, w) in [("time", self.time), ("space", self.space)] {
            if self.ls_order > 2 * w.n_ls {
                return Err(Error::Config(format!(
                    "{axis} smoothing: ls_order {} needs more than {} window samples",
                    self.ls_order,
                    2 * w.n_ls + 1
                )));
            }
        }
        if self.max_passes < 1 {
            return Err(Error::Config("smoothing max_passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Convolution weights equivalent to one smoothing step along an axis:
/// `smoothed[k] = Σ_j weights[j] · u[k + j − reach]`.
#[derive(Debug, Clone)]
pub struct SmoothingKernel {
    pub weights: Vec<f64>,
    pub reach: usize,
}

impl SmoothingKernel {
    pub fn new(ch_degree: usize, ls_order: usize, window: AxisWindow) -> Result<Self> {
        let nodes = chebyshev_offsets(ch_degree, window.n_ch as f64);
        let bary = barycentric_at_center(&nodes);
        let mut fits = Vec::with_capacity(nodes.len());
        for (&node, &b) in nodes.iter().zip(&bary) {
            if b != 0.0 {
                let (first, filter) = local_fit_filter(node, window.n_ls as f64, ls_order)?;
                fits.push((b, first, filter));
            }
        }
        // the kernel is symmetric in extent; take the widest sample offset actually used
        let reach = fits
            .iter()
            .map(|(_, first, f)| first.unsigned_abs().max((first + f.len() as i64 - 1).unsigned_abs()))
            .max()
            .unwrap_or(0) as usize;
        let mut weights = vec![0.0; 2 * reach + 1];
        for (b, first, filter) in fits {
            for (j, h) in filter.iter().enumerate() {
                let idx = (first + j as i64 + reach as i64) as usize;
                weights[idx] += b * h;
            }
        }
        Ok(Self { weights, reach })
    }

    /// Applies the kernel; samples whose support leaves the series or touches
    /// an invalid sample come back as `None`.
    pub fn apply(&self, values: &[f64], valid: &[bool]) -> Vec<Option<f64>> {
        let n = values.len();
        let w = 2 * self.reach + 1;
        // prefix count of invalid samples for O(1) support checks
        let mut bad = vec![0usize; n + 1];
        for i in 0..n {
            bad[i + 1] = bad[i] + usize::from(!valid[i]);
        }
        (0..n)
            .map(|k| {
                if k < self.reach || k + self.reach >= n {
                    return None;
                }
                let lo = k - self.reach;
                if bad[lo + w] - bad[lo] > 0 {
                    return None;
                }
                Some(self.weights.iter().zip(&values[lo..lo + w]).map(|(a, b)| a * b).sum())
            })
            .collect()
    }
}

/// Offsets (in samples) of the roots of `T_{degree+1}` scaled to `±half_width`.
pub(crate) fn chebyshev_offsets(degree: usize, half_width: f64) -> Vec<f64> {
    let n = degree + 1;
    (1..=n).map(|i| half_width * ((2 * i - 1) as f64 * PI / (2 * n) as f64).cos()).collect()
}

/// Barycentric interpolation coefficients that evaluate the interpolant
/// through `nodes` at offset 0.
fn barycentric_at_center(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    if let Some(hit) = nodes.iter().position(|x| x.abs() < 1e-12) {
        let mut out = vec![0.0; n];
        out[hit] = 1.0;
        return out;
    }
    // first-kind Chebyshev weights: (−1)^i sin((2i+1)π / 2n)
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let w = if i % 2 == 0 { 1.0 } else { -1.0 } * ((2 * i + 1) as f64 * PI / (2 * n) as f64).sin();
            w / (0.0 - nodes[i])
        })
        .collect();
    let total: f64 = terms.iter().sum();
    terms.iter().map(|t| t / total).collect()
}

/// Weights that evaluate an order-`order` least-squares fit, over the integer
/// samples within `±half_width` of `center`, at `center`. Returns the offset
/// of the first sample and the weights.
fn local_fit_filter(center: f64, half_width: f64, order: usize) -> Result<(i64, Vec<f64>)> {
    let tol = 1e-9;
    let first = (center - half_width - tol).ceil() as i64;
    let last = (center + half_width + tol).floor() as i64;
    let m = (last - first + 1).max(0) as usize;
    if m < order + 1 {
        return Err(Error::DegenerateWindow(format!(
            "{m} samples around offset {center:.3} cannot determine an order-{order} fit"
        )));
    }
    let p = order + 1;
    let vander = DMatrix::from_fn(m, p, |r, c| (((first + r as i64) as f64 - center) / half_width).powi(c as i32));
    let qr = vander.qr();
    let r = qr.r();
    // value at center is coefficient 0: weights = Q R^{-T} e0
    let mut e0 = DVector::zeros(p);
    e0[0] = 1.0;
    let z = r
        .transpose()
        .solve_lower_triangular(&e0)
        .ok_or_else(|| Error::DegenerateWindow(format!("singular local fit around offset {center:.3}")))?;
    let q = qr.q();
    let h = q * z;
    Ok((first, h.iter().copied().collect()))
}

/// Smooths one series. Entries without full window support (edges or
/// invalid neighbours) are `None`.
pub fn smooth_series(
    values: &[f64],
    valid: &[bool],
    ch_degree: usize,
    ls_order: usize,
    window: AxisWindow,
) -> Result<Vec<Option<f64>>> {
    let kernel = SmoothingKernel::new(ch_degree, ls_order, window)?;
    Ok(kernel.apply(values, valid))
}

/// One smoothing pass: along time at every location, then along space at
/// every time. Unsupported entries are masked in the result.
pub fn smooth_field(field: &Field, cfg: &SmoothingConfig) -> Result<Field> {
    cfg.validate()?;
    let kt = SmoothingKernel::new(cfg.ch_degree, cfg.ls_order, cfg.time)?;
    let kx = SmoothingKernel::new(cfg.ch_degree, cfg.ls_order, cfg.space)?;
    let mut out = field.clone();

    for ix in 0..field.nx {
        let smoothed = kt.apply(field.series_t(ix), field.mask_t(ix));
        for (it, s) in smoothed.into_iter().enumerate() {
            let k = field.idx(ix, it);
            match s {
                Some(v) => out.values[k] = v,
                None => out.mask[k] = false,
            }
        }
    }

    let stage = out.clone();
    let mut col = vec![0.0; field.nx];
    let mut col_mask = vec![false; field.nx];
    for it in 0..field.nt {
        for ix in 0..field.nx {
            col[ix] = stage.get(ix, it);
            col_mask[ix] = stage.is_valid(ix, it);
        }
        let smoothed = kx.apply(&col, &col_mask);
        for (ix, s) in smoothed.into_iter().enumerate() {
            let k = field.idx(ix, it);
            match s {
                Some(v) => out.values[k] = v,
                None => out.mask[k] = false,
            }
        }
    }
    Ok(out)
}

/// Standard deviation of the third space derivative over the plume interior
/// (points with `C` at least 10% of the field maximum).
pub fn fluctuation(field: &Field) -> f64 {
    let deriv = compute_derivatives(field);
    let cmax = deriv.points.iter().map(|p| p.c).fold(0.0, f64::max);
    let vals: Vec<f64> = deriv.points.iter().filter(|p| p.c >= 0.1 * cmax).map(|p| p.c_xxx).collect();
    if vals.is_empty() {
        return 0.0;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct Pretreatment {
    pub field: Field,
    pub passes: usize,
    pub fluctuation: f64,
}

/// Repeated smoothing: at least one pass, then further passes while the
/// fluctuation exceeds `fluctuation_factor × reference` (when a clean
/// reference is supplied), up to `max_passes`.
pub fn pretreat(field: &Field, cfg: &SmoothingConfig, reference: Option<f64>) -> Result<Pretreatment> {
    let mut current = smooth_field(field, cfg)?;
    let mut passes = 1;
    let mut fl = fluctuation(&current);
    while let Some(r) = reference {
        if passes >= cfg.max_passes || fl <= cfg.fluctuation_factor * r {
            break;
        }
        current = smooth_field(&current, cfg)?;
        passes += 1;
        fl = fluctuation(&current);
    }
    Ok(Pretreatment { field: current, passes, fluctuation: fl })
}
