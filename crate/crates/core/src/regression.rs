//! Least-squares coefficients at fixed `m` and the held-out prediction error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{evaluate_terms, normalize_design, DesignMatrix, LibrarySpec, NormalizationStats, Term};
use crate::params::ModelParams;
use crate::preprocess::{DataSplit, DerivPoint};

/// Condition number above which a fit is refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientScale {
    Normalized,
    Physical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub values: Vec<f64>,
    pub scale: CoefficientScale,
    pub term_ids: Vec<String>,
}

impl CoefficientVector {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.term_ids.iter().position(|t| t == id).map(|i| self.values[i])
    }
}

/// Minimizes `‖y − Φα‖₂` through a Householder QR factorization of `Φ`.
///
/// The returned vector is tagged `Normalized`: the intended input is a
/// z-scored system.
pub fn least_squares_fit(dm: &DesignMatrix) -> Result<CoefficientVector> {
    let values = solve_least_squares(&dm.phi, &dm.y, &dm.terms)?;
    Ok(CoefficientVector { values, scale: CoefficientScale::Normalized, term_ids: dm.term_ids() })
}

pub(crate) fn solve_least_squares(phi: &DMatrix<f64>, y: &DVector<f64>, terms: &[Term]) -> Result<Vec<f64>> {
    let (n, p) = phi.shape();
    if n < p {
        return Err(Error::Dimension(format!("{n} rows cannot determine {p} coefficients")));
    }
    if y.len() != n {
        return Err(Error::Dimension(format!("target has {} rows, matrix has {n}", y.len())));
    }
    let qr = phi.clone().qr();
    let r = qr.r();
    check_conditioning(&r, terms)?;
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, p).into_owned();
    let alpha = r.solve_upper_triangular(&rhs).ok_or_else(|| Error::IllConditioned {
        condition: f64::INFINITY,
        terms: terms.iter().map(|t| t.id().to_string()).collect(),
    })?;
    Ok(alpha.iter().copied().collect())
}

/// Singular values of `R` equal those of `Φ`; the right singular vector of the
/// smallest one names the collinear columns.
fn check_conditioning(r: &DMatrix<f64>, terms: &[Term]) -> Result<()> {
    let svd = r.clone().svd(false, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let (imin, smin) = s.argmin();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition.is_finite() && condition <= MAX_CONDITION {
        return Ok(());
    }
    let v_t = svd.v_t.expect("requested right singular vectors");
    let row = v_t.row(imin);
    let peak = row.amax();
    let collinear = row
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= 0.1 * peak)
        .map(|(j, _)| terms.get(j).map_or_else(|| format!("#{j}"), |t| t.id().to_string()))
        .collect();
    Err(Error::IllConditioned { condition, terms: collinear })
}

/// Maps normalized coefficients back to the physical scale,
/// `α_j = α̂_j · σ_y / σ_j`, and reports the residual intercept
/// `y_mean − Σ α_j · mean_j` that the centred fit absorbed.
pub fn denormalize_coefficients(
    alpha_norm: &CoefficientVector,
    stats: &NormalizationStats,
) -> Result<(CoefficientVector, f64)> {
    if alpha_norm.values.len() != stats.col_std.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients vs {} normalization entries",
            alpha_norm.values.len(),
            stats.col_std.len()
        )));
    }
    let values: Vec<f64> = alpha_norm.values.iter().zip(&stats.col_std).map(|(a, s)| a * stats.y_std / s).collect();
    let intercept = stats.y_mean - values.iter().zip(&stats.col_mean).map(|(a, m)| a * m).sum::<f64>();
    Ok((
        CoefficientVector { values, scale: CoefficientScale::Physical, term_ids: alpha_norm.term_ids.clone() },
        intercept,
    ))
}

/// Sum of squared residuals of `dm` under `alpha`. Normalized coefficients
/// are applied to `dm` transformed with the (training) `stats`; physical
/// coefficients are applied to `dm` as is.
pub fn residual_sum_of_squares(
    dm: &DesignMatrix,
    alpha: &CoefficientVector,
    stats: &NormalizationStats,
) -> Result<f64> {
    if dm.rows() == 0 {
        return Err(Error::Empty("no test points for the prediction error".into()));
    }
    if alpha.values.len() != dm.terms.len() {
        return Err(Error::Dimension(format!("{} coefficients for {} columns", alpha.values.len(), dm.terms.len())));
    }
    let a = DVector::from_column_slice(&alpha.values);
    let resid = match alpha.scale {
        CoefficientScale::Physical => &dm.y - &dm.phi * a,
        CoefficientScale::Normalized => {
            let z = stats.apply(dm)?;
            &z.y - &z.phi * a
        }
    };
    Ok(resid.norm_squared())
}

/// Prediction error `ε = Σ_n (∂u_n/∂t − Φ(u_n, m) α)²` over `test_points`.
pub fn prediction_error(
    test_points: &[DerivPoint],
    m: &ModelParams,
    library: &LibrarySpec,
    alpha: &CoefficientVector,
    stats: &NormalizationStats,
) -> Result<f64> {
    if test_points.is_empty() {
        return Err(Error::Empty("no test points for the prediction error".into()));
    }
    let dm = evaluate_terms(test_points, m, library)?;
    residual_sum_of_squares(&dm, alpha, stats)
}

/// Everything learned at one `m`.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub alpha_norm: CoefficientVector,
    pub alpha_phys: CoefficientVector,
    pub intercept: f64,
    pub stats: NormalizationStats,
    pub eps: f64,
}

/// Train/test data and library: a map from `m` to a fit and its prediction
/// error.
#[derive(Debug, Clone, Copy)]
pub struct TermRegression<'a> {
    pub split: &'a DataSplit,
    pub library: &'a LibrarySpec,
}

impl<'a> TermRegression<'a> {
    pub fn new(split: &'a DataSplit, library: &'a LibrarySpec) -> Self {
        Self { split, library }
    }

    pub fn fit(&self, m: &ModelParams) -> Result<RegressionFit> {
        let train = evaluate_terms(&self.split.train, m, self.library)?;
        let (train_norm, stats) = normalize_design(&train)?;
        let alpha_norm = least_squares_fit(&train_norm)?;
        let eps = prediction_error(&self.split.test, m, self.library, &alpha_norm, &stats)?;
        let (alpha_phys, intercept) = denormalize_coefficients(&alpha_norm, &stats)?;
        Ok(RegressionFit { alpha_norm, alpha_phys, intercept, stats, eps })
    }

    pub fn prediction_error(&self, m: &ModelParams) -> Result<f64> {
        Ok(self.fit(m)?.eps)
    }
}
