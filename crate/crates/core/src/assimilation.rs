//! Levenberg–Marquardt-form estimation of the embedded parameters `m`.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, ParamBounds};
use crate::regression::TermRegression;

/// λ above which a run of rejections is declared a stall.
pub const LAMBDA_MAX: f64 = 1e15;

/// Lower bound on `ε(m0)` when deriving the default `C_ε`.
pub const EPS_FLOOR: f64 = 1e-12;

/// Anything that maps a parameter vector to a prediction error.
pub trait PredictionErrorModel: Sync {
    fn prediction_error(&self, m: &[f64]) -> Result<f64>;

    /// False when `ε` provably ignores parameter `i`.
    fn depends_on(&self, _i: usize) -> bool {
        true
    }
}

impl<F> PredictionErrorModel for F
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn prediction_error(&self, m: &[f64]) -> Result<f64> {
        self(m)
    }
}

impl PredictionErrorModel for TermRegression<'_> {
    fn prediction_error(&self, m: &[f64]) -> Result<f64> {
        TermRegression::prediction_error(self, &ModelParams::from_slice(m)?)
    }

    fn depends_on(&self, i: usize) -> bool {
        self.library.depends_on(i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssimilationConfig {
    pub bounds: ParamBounds,
    /// Diagonal of `C_M`; `None` means the variance of the uniform prior.
    pub c_m: Option<Vec<f64>>,
    /// `C_ε`; `None` means `(0.01 · max(ε(m0), 1e-12))²`.
    pub c_eps: Option<f64>,
    /// Multiplier applied to `C_ε` after it is resolved.
    pub c_eps_scale: f64,
    pub eps_obs: f64,
    pub lambda0: f64,
    pub gamma: f64,
    pub tau: f64,
    pub i_max: usize,
    pub perturb_frac: f64,
    pub use_transform: bool,
}

impl Default for AssimilationConfig {
    fn default() -> Self {
        Self {
            bounds: ParamBounds::prior(),
            c_m: None,
            c_eps: None,
            c_eps_scale: 1.0,
            eps_obs: 0.0,
            lambda0: 10.0,
            gamma: 10.0,
            tau: 1e-3,
            i_max: 25,
            perturb_frac: 0.01,
            use_transform: false,
        }
    }
}

impl AssimilationConfig {
    pub fn validate(&self) -> Result<()> {
        let b = ParamBounds::new(self.bounds.lower.clone(), self.bounds.upper.clone())?;
        let mut bad = Vec::new();
        if let Some(c_m) = &self.c_m {
            if c_m.len() != b.len() || c_m.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                bad.push("c_m");
            }
        }
        if let Some(c) = self.c_eps {
            if !(c > 0.0 && c.is_finite()) {
                bad.push("c_eps");
            }
        }
        let positive = [
            ("c_eps_scale", self.c_eps_scale),
            ("lambda0", self.lambda0),
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("perturb_frac", self.perturb_frac),
        ];
        bad.extend(positive.iter().filter(|(_, v)| !(*v > 0.0 && v.is_finite())).map(|(k, _)| *k));
        if !(self.eps_obs >= 0.0 && self.eps_obs.is_finite()) {
            bad.push("eps_obs");
        }
        if self.i_max == 0 {
            bad.push("i_max");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid assimilation settings: {}", bad.join(", "))))
        }
    }

    /// Diagonal of `C_M`.
    pub fn prior_covariance(&self) -> Vec<f64> {
        match &self.c_m {
            Some(c) => c.clone(),
            None => (0..self.bounds.len()).map(|i| self.bounds.width(i).powi(2) / 12.0).collect(),
        }
    }

    pub fn error_variance(&self, eps0: f64) -> f64 {
        let base = self.c_eps.unwrap_or_else(|| (0.01 * eps0.max(EPS_FLOOR)).powi(2));
        base * self.c_eps_scale
    }
}

/// `O(m) = ½(ε−ε_obs)²/C_ε + ½(m−m_pr)ᵀC_M⁻¹(m−m_pr)` with diagonal `C_M`.
pub fn objective(eps: f64, eps_obs: f64, c_eps: f64, m: &[f64], m_pr: &[f64], c_m: &[f64]) -> f64 {
    let data = 0.5 * (eps - eps_obs).powi(2) / c_eps;
    let prior: f64 = m.iter().zip(m_pr).zip(c_m).map(|((m, p), c)| (m - p).powi(2) / c).sum();
    data + 0.5 * prior
}

/// Central-difference gradient `dε/dm`. The step is `perturb_frac·|m_i|`, or
/// `perturb_frac·width_i` when `m_i = 0`. Parameters the model ignores get an
/// exact zero without evaluation.
pub fn fd_gradient(model: &dyn PredictionErrorModel, m: &[f64], perturb_frac: f64, widths: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; m.len()];
    for i in 0..m.len() {
        if !model.depends_on(i) {
            continue;
        }
        let delta = if m[i] == 0.0 { perturb_frac * widths[i] } else { perturb_frac * m[i].abs() };
        let mut plus = m.to_vec();
        let mut minus = m.to_vec();
        plus[i] += delta;
        minus[i] -= delta;
        let (ep, em) = rayon::join(|| model.prediction_error(&plus), || model.prediction_error(&minus));
        g[i] = (ep? - em?) / (2.0 * delta);
    }
    Ok(g)
}

/// One update in the form used by the method:
///
/// `m⁺ = m − 1/(1+λ)·[C_M − C_M Gᵀ((1+λ)C_ε + G C_M Gᵀ)⁻¹ G C_M] C_M⁻¹ (m − m_pr)
///        − C_M Gᵀ((1+λ)C_ε + G C_M Gᵀ)⁻¹ (ε − ε_obs)`
#[allow(clippy::too_many_arguments)]
pub fn lm_step(
    m: &[f64],
    g: &[f64],
    lambda: f64,
    c_m: &DMatrix<f64>,
    c_eps: f64,
    m_pr: &[f64],
    eps: f64,
    eps_obs: f64,
) -> Result<Vec<f64>> {
    let p = m.len();
    check_shapes(p, g, c_m, m_pr)?;
    let m_l = DVector::from_column_slice(m);
    let g = RowDVector::from_row_slice(g);
    let mismatch = &m_l - DVector::from_column_slice(m_pr);
    let cm_inv = c_m.clone().try_inverse().ok_or_else(|| Error::Domain("C_M is singular".into()))?;
    let s = (1.0 + lambda) * c_eps + (&g * c_m * g.transpose())[(0, 0)];
    if !(s.is_finite() && s != 0.0) {
        return Err(Error::Domain(format!("singular innovation term {s}")));
    }
    let gain = c_m * g.transpose() / s;
    let damped = (c_m - &gain * &g * c_m) * cm_inv * mismatch / (1.0 + lambda);
    let next = m_l - damped - gain * (eps - eps_obs);
    finite(next)
}

/// The same update written as a damped Gauss–Newton step:
///
/// `m⁺ = m − [(1+λ)C_M⁻¹ + GᵀC_ε⁻¹G]⁻¹ [C_M⁻¹(m − m_pr) + GᵀC_ε⁻¹(ε − ε_obs)]`
#[allow(clippy::too_many_arguments)]
pub fn lm_step_gauss_newton(
    m: &[f64],
    g: &[f64],
    lambda: f64,
    c_m: &DMatrix<f64>,
    c_eps: f64,
    m_pr: &[f64],
    eps: f64,
    eps_obs: f64,
) -> Result<Vec<f64>> {
    let p = m.len();
    check_shapes(p, g, c_m, m_pr)?;
    let m_l = DVector::from_column_slice(m);
    let g = RowDVector::from_row_slice(g);
    let mismatch = &m_l - DVector::from_column_slice(m_pr);
    let cm_inv = c_m.clone().try_inverse().ok_or_else(|| Error::Domain("C_M is singular".into()))?;
    let hessian = &cm_inv * (1.0 + lambda) + g.transpose() * &g / c_eps;
    let rhs = &cm_inv * mismatch + g.transpose() * ((eps - eps_obs) / c_eps);
    let step = hessian.lu().solve(&rhs).ok_or_else(|| Error::Domain("singular modified Hessian".into()))?;
    finite(m_l - step)
}

fn check_shapes(p: usize, g: &[f64], c_m: &DMatrix<f64>, m_pr: &[f64]) -> Result<()> {
    if g.len() != p || m_pr.len() != p || c_m.shape() != (p, p) {
        return Err(Error::Dimension(format!(
            "m has {p} entries, G {}, m_pr {}, C_M {:?}",
            g.len(),
            m_pr.len(),
            c_m.shape()
        )));
    }
    Ok(())
}

fn finite(v: DVector<f64>) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v.iter().copied().collect())
    } else {
        Err(Error::Domain("update produced a non-finite parameter".into()))
    }
}

/// `s = ln((m − lower)/(upper − m))`; requires `lower < m < upper`.
pub fn to_unbounded(m: &[f64], bounds: &ParamBounds) -> Result<Vec<f64>> {
    if m.len() != bounds.len() {
        return Err(Error::Dimension(format!("{} parameters vs {} bounds", m.len(), bounds.len())));
    }
    m.iter()
        .enumerate()
        .map(|(i, &v)| {
            let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
            if v > lo && v < hi {
                Ok(((v - lo) / (hi - v)).ln())
            } else {
                Err(Error::Domain(format!("parameter {i} = {v} is not strictly inside ({lo}, {hi})")))
            }
        })
        .collect()
}

/// `m = ½(upper + lower) + ½(upper − lower)·(eˢ − 1)/(eˢ + 1)`.
pub fn from_unbounded(s: &[f64], bounds: &ParamBounds) -> Vec<f64> {
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
            // (eˢ − 1)/(eˢ + 1) = tanh(s/2), which does not overflow
            0.5 * (hi + lo) + 0.5 * (hi - lo) * (0.5 * v).tanh()
        })
        .collect()
}

/// `dm_i/ds_i = (upper − m)(m − lower)/(upper − lower)`.
pub fn chain_factors(m: &[f64], bounds: &ParamBounds) -> Vec<f64> {
    m.iter()
        .enumerate()
        .map(|(i, &v)| {
            let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
            (hi - v) * (v - lo) / (hi - lo)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Stalled,
    NoFreeParameters,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::Stalled => "stalled",
            Termination::NoFreeParameters => "no_free_parameters",
        }
    }
}

/// One evaluated point. Record 0 of each phase is the starting point; every
/// later record is a proposal made from the latest accepted record of the
/// same phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub m: Vec<f64>,
    /// `None` when the regression failed at this point.
    pub eps: Option<f64>,
    pub objective: Option<f64>,
    pub lambda: f64,
    pub accepted: bool,
    pub transformed: bool,
    /// Gradient in the working coordinates that produced this proposal.
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssimilationTrace {
    pub records: Vec<IterationRecord>,
    pub m0: Vec<f64>,
    pub final_m: Vec<f64>,
    pub final_eps: f64,
    pub termination: Termination,
    /// Outer iterations of the final phase.
    pub iterations: usize,
    /// True when an out-of-bounds step forced a rerun with the transform.
    pub restarted: bool,
    pub c_m: Vec<f64>,
    pub c_eps: f64,
    pub eps_obs: f64,
}

impl AssimilationTrace {
    /// Records of the phase run with or without the transform.
    pub fn phase(&self, transformed: bool) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(move |r| r.transformed == transformed)
    }

    /// ε over accepted records of each phase is strictly decreasing.
    pub fn accepted_eps_decreasing(&self) -> bool {
        [false, true].iter().all(|&t| {
            let eps: Vec<f64> = self.phase(t).filter(|r| r.accepted).filter_map(|r| r.eps).collect();
            eps.windows(2).all(|w| w[1] < w[0])
        })
    }
}

enum PhaseEnd {
    Done(Termination, usize),
    LeftBounds,
}

/// Minimizes the prediction error from `m0`.
///
/// Without the transform, an accepted step that leaves the bounds abandons
/// the phase and the run restarts once from `m0` in transformed coordinates.
pub fn run_assimilation(
    model: &dyn PredictionErrorModel,
    m0: &[f64],
    cfg: &AssimilationConfig,
) -> Result<AssimilationTrace> {
    cfg.validate()?;
    let bounds = &cfg.bounds;
    if m0.len() != bounds.len() {
        return Err(Error::Dimension(format!("m0 has {} entries, bounds {}", m0.len(), bounds.len())));
    }
    if !bounds.contains(m0) {
        return Err(Error::Domain(format!("initial parameters {m0:?} are outside the bounds")));
    }
    let eps0 = model.prediction_error(m0)?;
    let c_m = cfg.prior_covariance();
    let c_eps = cfg.error_variance(eps0);
    let mut trace = AssimilationTrace {
        records: Vec::new(),
        m0: m0.to_vec(),
        final_m: m0.to_vec(),
        final_eps: eps0,
        termination: Termination::NoFreeParameters,
        iterations: 0,
        restarted: false,
        c_m,
        c_eps,
        eps_obs: cfg.eps_obs,
    };
    let free = (0..m0.len()).any(|i| model.depends_on(i));
    if !free {
        trace.records.push(IterationRecord {
            iteration: 0,
            m: m0.to_vec(),
            eps: Some(eps0),
            objective: Some(objective(eps0, cfg.eps_obs, c_eps, m0, m0, &trace.c_m)),
            lambda: cfg.lambda0,
            accepted: true,
            transformed: cfg.use_transform,
            gradient: vec![0.0; m0.len()],
        });
        return Ok(trace);
    }
    let mut transformed = cfg.use_transform;
    loop {
        match run_phase(model, m0, eps0, cfg, transformed, &mut trace)? {
            PhaseEnd::Done(termination, iterations) => {
                trace.termination = termination;
                trace.iterations = iterations;
                return Ok(trace);
            }
            PhaseEnd::LeftBounds => {
                transformed = true;
                trace.restarted = true;
            }
        }
    }
}

fn run_phase(
    model: &dyn PredictionErrorModel,
    m0: &[f64],
    eps0: f64,
    cfg: &AssimilationConfig,
    transformed: bool,
    trace: &mut AssimilationTrace,
) -> Result<PhaseEnd> {
    let bounds = &cfg.bounds;
    let p = m0.len();
    let widths: Vec<f64> = (0..p).map(|i| bounds.width(i)).collect();
    let c_m = DMatrix::from_diagonal(&DVector::from_column_slice(&trace.c_m));
    let (c_eps, eps_obs) = (trace.c_eps, trace.eps_obs);
    let to_m = |w: &[f64]| if transformed { from_unbounded(w, bounds) } else { w.to_vec() };

    // working coordinates: m itself, or s in transform mode
    let w_pr = if transformed { to_unbounded(m0, bounds)? } else { m0.to_vec() };
    let mut w = w_pr.clone();
    let mut m = m0.to_vec();
    let mut eps = eps0;
    let mut lambda = cfg.lambda0;
    trace.final_m = m.clone();
    trace.final_eps = eps;
    let mut record = |iteration: usize, m: &[f64], eps: Option<f64>, lambda: f64, accepted: bool, gradient: &[f64]| {
        trace.records.push(IterationRecord {
            iteration,
            m: m.to_vec(),
            eps,
            objective: eps.map(|e| objective(e, eps_obs, c_eps, m, m0, &trace.c_m)),
            lambda,
            accepted,
            transformed,
            gradient: gradient.to_vec(),
        });
    };
    record(0, &m, Some(eps), lambda, true, &vec![0.0; p]);

    for iteration in 1..=cfg.i_max {
        let mut g = fd_gradient(model, &m, cfg.perturb_frac, &widths)?;
        if transformed {
            for (gi, f) in g.iter_mut().zip(chain_factors(&m, bounds)) {
                *gi *= f;
            }
        }
        loop {
            let w_next = lm_step(&w, &g, lambda, &c_m, c_eps, &w_pr, eps, eps_obs)?;
            let m_next = to_m(&w_next);
            let e_next = model.prediction_error(&m_next).ok().filter(|e| e.is_finite());
            match e_next {
                Some(e) if e < eps => {
                    record(iteration, &m_next, Some(e), lambda, true, &g);
                    if !transformed && !bounds.contains(&m_next) {
                        return Ok(PhaseEnd::LeftBounds);
                    }
                    let converged = (e - eps).abs() < cfg.tau * eps;
                    w = w_next;
                    m = m_next;
                    eps = e;
                    trace.final_m = m.clone();
                    trace.final_eps = eps;
                    lambda /= cfg.gamma;
                    if converged {
                        return Ok(PhaseEnd::Done(Termination::Converged, iteration));
                    }
                    break;
                }
                _ => {
                    record(iteration, &m_next, e_next, lambda, false, &g);
                    lambda *= cfg.gamma;
                    if lambda > LAMBDA_MAX {
                        return Ok(PhaseEnd::Done(Termination::Stalled, iteration));
                    }
                }
            }
        }
    }
    Ok(PhaseEnd::Done(Termination::MaxIterations, cfg.i_max))
}
