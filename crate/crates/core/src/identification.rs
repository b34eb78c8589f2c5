//! Multi-restart identification: prior sampling, ensembles, screening,
//! pruning, refit and aggregation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assimilation::{run_assimilation, AssimilationConfig, AssimilationTrace, Termination};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::library::{LibraryName, LibrarySpec, Term};
use crate::params::{ModelParams, ParamBounds, PARAM_NAMES};
use crate::preprocess::{
    add_noise, compute_derivatives, fluctuation, pretreat, split_train_test, DataSplit, NoiseSpec, SmoothingConfig,
};
use crate::regression::{CoefficientVector, TermRegression};
use crate::transport::{measure, ScenarioConfig};

pub const DEFAULT_SPLIT_RATIO: f64 = 0.6;
pub const DEFAULT_SCREEN_FACTOR: f64 = 1.5;
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.05;

/// `n` uniform draws inside `bounds`, one vector per draw.
pub fn sample_prior(n: usize, bounds: &ParamBounds, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..bounds.len()).map(|i| rng.random_range(bounds.lower[i]..bounds.upper[i])).collect()).collect()
}

/// Seed of restart `run_id` (SplitMix64 finalizer over the master seed).
pub fn run_seed(master: u64, run_id: usize) -> u64 {
    let mut z = master.wrapping_add((run_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Measurement data after noise, pretreatment, differentiation and split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub field: Field,
    pub smoothing_passes: usize,
    pub split: DataSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataOptions {
    pub noise: NoiseSpec,
    pub smoothing: SmoothingConfig,
    pub split_ratio: f64,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            noise: NoiseSpec { delta: 0.0, seed: 0 },
            smoothing: SmoothingConfig::default(),
            split_ratio: DEFAULT_SPLIT_RATIO,
        }
    }
}

/// Simulates `scenario` and prepares its measurements.
pub fn prepare_dataset(scenario: &ScenarioConfig, opts: &DataOptions) -> Result<Dataset> {
    let clean = measure(scenario)?;
    let reference = (opts.noise.delta > 0.0).then(|| fluctuation(&clean));
    dataset_from_field(&clean, scenario.conc_floor, opts, reference)
}

/// Noise (when `δ > 0`, re-masking below `floor`), then
/// [`dataset_from_measured`].
pub fn dataset_from_field(field: &Field, floor: f64, opts: &DataOptions, reference: Option<f64>) -> Result<Dataset> {
    check_noise(opts.noise.delta)?;
    if opts.noise.delta > 0.0 {
        let mut noisy = add_noise(field, opts.noise);
        noisy.apply_floor(floor);
        dataset_from_measured(&noisy, opts, reference)
    } else {
        dataset_from_measured(field, opts, None)
    }
}

/// Smoothing (only when `opts.noise.delta > 0`), derivatives and the
/// temporal split of a field that already carries its noise.
pub fn dataset_from_measured(field: &Field, opts: &DataOptions, reference: Option<f64>) -> Result<Dataset> {
    check_noise(opts.noise.delta)?;
    let (field, passes) = if opts.noise.delta > 0.0 {
        let p = pretreat(field, &opts.smoothing, reference)?;
        (p.field, p.passes)
    } else {
        (field.clone(), 0)
    };
    let split = split_train_test(&compute_derivatives(&field), opts.split_ratio)?;
    Ok(Dataset { field, smoothing_passes: passes, split })
}

fn check_noise(delta: f64) -> Result<()> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("noise level {delta} must be non-negative")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationConfig {
    pub n_restarts: usize,
    pub master_seed: u64,
    pub assimilation: AssimilationConfig,
    pub screen_factor: f64,
    pub prune_threshold: f64,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            n_restarts: 20,
            master_seed: 0,
            assimilation: AssimilationConfig::default(),
            screen_factor: DEFAULT_SCREEN_FACTOR,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
        }
    }
}

impl IdentificationConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_restarts == 0 {
            bad.push("n_restarts must be at least 1".to_string());
        }
        if !(self.screen_factor >= 1.0 && self.screen_factor.is_finite()) {
            bad.push(format!("screen_factor {} must be at least 1", self.screen_factor));
        }
        if !(self.prune_threshold >= 0.0 && self.prune_threshold < 1.0) {
            bad.push(format!("prune_threshold {} must lie in [0, 1)", self.prune_threshold));
        }
        if let Err(e) = self.assimilation.validate() {
            bad.push(match e {
                Error::Config(m) => m,
                other => other.to_string(),
            });
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: usize,
    pub seed: u64,
    pub m0: Vec<f64>,
    pub trace: AssimilationTrace,
    pub alpha_norm: CoefficientVector,
    pub alpha_phys: CoefficientVector,
    pub intercept: f64,
    pub eps_final: f64,
    pub library_name: LibraryName,
}

impl RunResult {
    pub fn final_m(&self) -> &[f64] {
        &self.trace.final_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_id: usize,
    pub seed: u64,
    pub m0: Vec<f64>,
    pub reason: String,
}

/// Assimilation from `m0` followed by a final refit of `α` at the result.
pub fn run_single(
    split: &DataSplit,
    library: &LibrarySpec,
    m0: &[f64],
    cfg: &AssimilationConfig,
) -> Result<(AssimilationTrace, RunFitted)> {
    let reg = TermRegression::new(split, library);
    let trace = run_assimilation(&reg, m0, cfg)?;
    let fit = reg.fit(&ModelParams::from_slice(&trace.final_m)?)?;
    Ok((
        trace,
        RunFitted { alpha_norm: fit.alpha_norm, alpha_phys: fit.alpha_phys, intercept: fit.intercept, eps: fit.eps },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFitted {
    pub alpha_norm: CoefficientVector,
    pub alpha_phys: CoefficientVector,
    pub intercept: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub library: LibrarySpec,
    /// Completed runs sorted by run id.
    pub results: Vec<RunResult>,
    /// Runs that errored or stalled, sorted by run id.
    pub failures: Vec<RunFailure>,
}

/// `n_restarts` independent runs from prior draws; run `i` uses
/// `run_seed(master_seed, i)`, so its start does not depend on the ensemble
/// size or on scheduling.
pub fn run_ensemble(split: &DataSplit, library: &LibrarySpec, cfg: &IdentificationConfig) -> Result<Ensemble> {
    cfg.validate()?;
    library.validate()?;
    let outcomes: Vec<std::result::Result<RunResult, RunFailure>> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|run_id| {
            let seed = run_seed(cfg.master_seed, run_id);
            let m0 = sample_prior(1, &cfg.assimilation.bounds, seed).remove(0);
            let fail = |reason: String| RunFailure { run_id, seed, m0: m0.clone(), reason };
            match run_single(split, library, &m0, &cfg.assimilation) {
                Ok((trace, _)) if trace.termination == Termination::Stalled => {
                    Err(fail(format!("stalled after {} iterations", trace.iterations)))
                }
                Ok((trace, fit)) => Ok(RunResult {
                    run_id,
                    seed,
                    m0: m0.clone(),
                    trace,
                    alpha_norm: fit.alpha_norm,
                    alpha_phys: fit.alpha_phys,
                    intercept: fit.intercept,
                    eps_final: fit.eps,
                    library_name: library.name,
                }),
                Err(e) => Err(fail(Error::Run { run_id, source: Box::new(e) }.to_string())),
            }
        })
        .collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(Ensemble { library: library.clone(), results, failures })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Splits runs into those with `ε ≤ factor × median(ε)` and the rest. With
/// fewer than three runs the median is not meaningful and nothing is
/// screened.
pub fn screen_by_prediction_error(results: &[RunResult], factor: f64) -> (Vec<RunResult>, Vec<RunResult>) {
    if results.len() < 3 {
        return (results.to_vec(), Vec::new());
    }
    let mut eps: Vec<f64> = results.iter().map(|r| r.eps_final).collect();
    let cutoff = factor * median(&mut eps);
    results.iter().cloned().partition(|r| r.eps_final <= cutoff)
}

/// Mean `|α̂|` per library term over `results`.
pub fn mean_abs_alpha_norm(results: &[RunResult]) -> Vec<f64> {
    let p = results.first().map_or(0, |r| r.alpha_norm.values.len());
    let n = results.len() as f64;
    (0..p).map(|j| results.iter().map(|r| r.alpha_norm.values[j].abs()).sum::<f64>() / n).collect()
}

/// Terms whose mean `|α̂|` reaches `threshold` times the largest one, in
/// library order.
pub fn prune_terms(results: &[RunResult], library: &LibrarySpec, threshold: f64) -> Result<Vec<Term>> {
    if results.is_empty() {
        return Err(Error::Empty("no retained runs to prune from".into()));
    }
    let means = mean_abs_alpha_norm(results);
    if means.len() != library.len() {
        return Err(Error::Dimension(format!("{} coefficients for {} terms", means.len(), library.len())));
    }
    let max = means.iter().copied().fold(0.0, f64::max);
    let selected: Vec<Term> =
        library.terms.iter().zip(&means).filter(|(_, &m)| max > 0.0 && m >= threshold * max).map(|(t, _)| *t).collect();
    if selected.is_empty() {
        return Err(Error::AllPruned);
    }
    Ok(selected)
}

/// The library restricted to `selected`; the original library itself when
/// nothing was removed.
pub fn pruned_library(library: &LibrarySpec, selected: &[Term]) -> Result<LibrarySpec> {
    if selected == library.terms.as_slice() {
        return Ok(library.clone());
    }
    if let Some(t) = selected.iter().find(|t| !library.terms.contains(t)) {
        return Err(Error::Config(format!("term {} is not in the library", t.id())));
    }
    LibrarySpec::custom(selected.to_vec())
}

/// Ensemble over the pruned library with the same seeds.
pub fn refit_pruned(
    split: &DataSplit,
    library: &LibrarySpec,
    selected: &[Term],
    cfg: &IdentificationConfig,
) -> Result<Ensemble> {
    if selected.is_empty() {
        return Err(Error::AllPruned);
    }
    run_ensemble(split, &pruned_library(library, selected)?, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermStats {
    pub id: String,
    pub process: String,
    pub mean_phys: f64,
    pub std_phys: f64,
    pub mean_norm: f64,
    pub std_norm: f64,
    pub mean_abs_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub library: LibraryName,
    pub terms: Vec<TermStats>,
    pub params: Vec<ParamStats>,
    pub retained_count: usize,
    pub retained_ids: Vec<usize>,
    pub screened_out_ids: Vec<usize>,
    pub failed_ids: Vec<usize>,
    pub selected_terms: Vec<String>,
    pub learned_equation: String,
}

impl EnsembleSummary {
    pub fn term(&self, id: &str) -> Option<&TermStats> {
        self.terms.iter().find(|t| t.id == id)
    }

    pub fn param(&self, name: &str) -> Option<&ParamStats> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-term and per-parameter mean and (population) standard deviation over
/// `retained`, sorted by run id before summation.
pub fn aggregate_summary(
    retained: &[RunResult],
    library: &LibrarySpec,
    selected: &[Term],
    screened_out_ids: Vec<usize>,
    failed_ids: Vec<usize>,
) -> Result<EnsembleSummary> {
    if retained.is_empty() {
        return Err(Error::Empty("no retained runs to aggregate".into()));
    }
    let mut runs: Vec<&RunResult> = retained.iter().collect();
    runs.sort_by_key(|r| r.run_id);
    let terms: Vec<TermStats> = library
        .terms
        .iter()
        .enumerate()
        .map(|(j, term)| {
            let (mean_phys, std_phys) = mean_std(runs.iter().map(|r| r.alpha_phys.values[j]));
            let (mean_norm, std_norm) = mean_std(runs.iter().map(|r| r.alpha_norm.values[j]));
            let (mean_abs_norm, _) = mean_std(runs.iter().map(|r| r.alpha_norm.values[j].abs()));
            TermStats {
                id: term.id().into(),
                process: term.process().label().into(),
                mean_phys,
                std_phys,
                mean_norm,
                std_norm,
                mean_abs_norm,
            }
        })
        .collect();
    let params: Vec<ParamStats> = PARAM_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let (mean, std) = mean_std(runs.iter().map(|r| r.trace.final_m[i]));
            ParamStats { name: (*name).into(), mean, std }
        })
        .collect();
    let mean_m = ModelParams::new(params[0].mean, params[1].mean);
    let coefficients: Vec<f64> = terms.iter().map(|t| t.mean_phys).collect();
    Ok(EnsembleSummary {
        library: library.name,
        learned_equation: learned_equation(&library.terms, &coefficients, &mean_m),
        terms,
        params,
        retained_count: runs.len(),
        retained_ids: runs.iter().map(|r| r.run_id).collect(),
        screened_out_ids,
        failed_ids,
        selected_terms: selected.iter().map(|t| t.id().to_string()).collect(),
    })
}

/// `dC/dt = c1 term1 + c2 term2 + …` with signed coefficients.
pub fn learned_equation(terms: &[Term], coefficients: &[f64], m: &ModelParams) -> String {
    let mut s = String::from("dC/dt =");
    for (i, (t, c)) in terms.iter().zip(coefficients).enumerate() {
        let sign = if *c < 0.0 { '-' } else { '+' };
        if i == 0 {
            let lead = if *c < 0.0 { "-" } else { "" };
            s.push_str(&format!(" {lead}{:.4e} {}", c.abs(), t.display(m)));
        } else {
            s.push_str(&format!(" {sign} {:.4e} {}", c.abs(), t.display(m)));
        }
    }
    s
}

/// Screening and aggregation of one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub ensemble: Ensemble,
    pub summary: EnsembleSummary,
}

fn screen_and_summarize(
    ensemble: Ensemble,
    cfg: &IdentificationConfig,
    selected: Option<&[Term]>,
) -> Result<(StageOutcome, Vec<Term>)> {
    if ensemble.results.is_empty() {
        let reasons: Vec<String> =
            ensemble.failures.iter().map(|f| format!("run {}: {}", f.run_id, f.reason)).collect();
        return Err(Error::Empty(format!("every run failed: {}", reasons.join("; "))));
    }
    let (retained, screened) = screen_by_prediction_error(&ensemble.results, cfg.screen_factor);
    let selected = match selected {
        Some(s) => s.to_vec(),
        None => prune_terms(&retained, &ensemble.library, cfg.prune_threshold)?,
    };
    let summary = aggregate_summary(
        &retained,
        &ensemble.library,
        &selected,
        screened.iter().map(|r| r.run_id).collect(),
        ensemble.failures.iter().map(|f| f.run_id).collect(),
    )?;
    Ok((StageOutcome { ensemble, summary }, selected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationOutcome {
    /// Ensemble over the requested library.
    pub initial: StageOutcome,
    pub selected_terms: Vec<String>,
    /// Ensemble over the pruned library; absent when pruning removed nothing.
    pub refit: Option<StageOutcome>,
}

impl IdentificationOutcome {
    /// The summary that carries the learned equation.
    pub fn final_summary(&self) -> &EnsembleSummary {
        self.refit.as_ref().map_or(&self.initial.summary, |s| &s.summary)
    }

    pub fn final_stage(&self) -> &StageOutcome {
        self.refit.as_ref().unwrap_or(&self.initial)
    }
}

/// Ensemble → screening → pruning → refit on the pruned library (when terms
/// were removed) → aggregation.
pub fn identify(split: &DataSplit, library: &LibrarySpec, cfg: &IdentificationConfig) -> Result<IdentificationOutcome> {
    let (initial, selected) = screen_and_summarize(run_ensemble(split, library, cfg)?, cfg, None)?;
    let selected_terms = selected.iter().map(|t| t.id().to_string()).collect();
    let refit = if selected != library.terms {
        let ensemble = refit_pruned(split, library, &selected, cfg)?;
        Some(screen_and_summarize(ensemble, cfg, Some(&selected))?.0)
    } else {
        None
    };
    Ok(IdentificationOutcome { initial, selected_terms, refit })
}
