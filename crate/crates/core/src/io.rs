//! File formats: measurement fields (CSV), dataset metadata, run tables,
//! ensemble summaries, traces and the comparison report.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value parses back bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assimilation::AssimilationTrace;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::identification::{EnsembleSummary, IdentificationOutcome, RunFailure, StageOutcome};
use crate::library::{LibraryName, Term};
use crate::params::PARAM_NAMES;
use crate::preprocess::NoiseSpec;
use crate::transport::ScenarioConfig;

pub const FIELD_HEADER: [&str; 3] = ["x_cm", "t_s", "C_mg_per_l"];
pub const CLEAN_FIELD_FILE: &str = "clean.csv";
pub const NOISY_FIELD_FILE: &str = "noisy.csv";
pub const METADATA_FILE: &str = "metadata.json";
pub const RUNS_FILE: &str = "runs.csv";
pub const INITIAL_RUNS_FILE: &str = "runs_initial.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_DIR: &str = "traces";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Parse { path: path.display().to_string(), message: message.to_string() }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io { path: path.display().to_string(), source },
            _ => unreachable!(),
        }
    } else {
        parse_err(path, e)
    }
}

/// Shortest representation that parses back to the same `f64`, in plain
/// decimal for moderate magnitudes and exponent form otherwise.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

/// One row per grid entry, time-major (all locations of the first time,
/// then the next time). Masked entries are written with their value; the
/// reader re-derives the mask from a floor.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(FIELD_HEADER).map_err(|e| csv_err(path, e))?;
    for it in 0..field.nt {
        let t = format_f64(field.t(it));
        for ix in 0..field.nx {
            w.write_record([format_f64(field.x(ix)), t.clone(), format_f64(field.get(ix, it))])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a field written by [`write_field_csv`]; entries below `floor` are
/// masked.
pub fn read_field_csv(path: &Path, floor: f64) -> Result<Field> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(FIELD_HEADER) {
        return Err(parse_err(
            path,
            format!(
                "expected header {}, found {}",
                FIELD_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let mut row = [0.0; 3];
        for (k, v) in row.iter_mut().enumerate() {
            *v = rec
                .get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err(path, format!("row {}: bad or missing {}", line + 2, FIELD_HEADER[k])))?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    let t0 = rows[0][1];
    let nx = rows.iter().take_while(|r| r[1] == t0).count();
    if nx < 2 || !rows.len().is_multiple_of(nx) {
        return Err(parse_err(path, format!("{} rows do not form a time-major grid of {nx} locations", rows.len())));
    }
    let nt = rows.len() / nx;
    let x0 = rows[0][0];
    let dx = (rows[nx - 1][0] - x0) / (nx - 1) as f64;
    let dt = if nt > 1 { (rows[rows.len() - 1][1] - t0) / (nt - 1) as f64 } else { 1.0 };
    for (k, row) in rows.iter().enumerate() {
        let (it, ix) = (k / nx, k % nx);
        if row[0] != rows[ix][0] || row[1] != rows[it * nx][1] {
            return Err(parse_err(path, format!("row {} breaks the time-major grid layout", k + 2)));
        }
    }
    let mut values = vec![0.0; nx * nt];
    for (k, row) in rows.iter().enumerate() {
        values[(k % nx) * nt + k / nx] = row[2];
    }
    let mut field = Field::new(nx, nt, x0, dx, t0, dt, values)?;
    field.apply_floor(floor);
    Ok(field)
}

/// Companion record of the field files written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub scenario: String,
    pub scenario_config: ScenarioConfig,
    pub noise: NoiseSpec,
    pub nx: usize,
    pub nt: usize,
    pub x0: f64,
    pub dx: f64,
    pub t0: f64,
    pub dt: f64,
    pub valid_count: usize,
    /// Fluctuation statistic of the clean field (smoothing reference).
    pub clean_fluctuation: f64,
    pub clean_file: String,
    pub noisy_file: Option<String>,
}

impl FieldMetadata {
    /// Replaces the grid spacing inferred from CSV coordinates by the exact
    /// values recorded here.
    pub fn restore_grid(&self, field: &mut Field) -> Result<()> {
        if (field.nx, field.nt) != (self.nx, self.nt) {
            return Err(Error::Dimension(format!(
                "field is {}×{}, metadata says {}×{}",
                field.nx, field.nt, self.nx, self.nt
            )));
        }
        field.x0 = self.x0;
        field.dx = self.dx;
        field.t0 = self.t0;
        field.dt = self.dt;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Retained,
    ScreenedOut,
    Failed,
}

impl RunStatus {
    fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Retained => "retained",
            RunStatus::ScreenedOut => "screened_out",
            RunStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [RunStatus::Retained, RunStatus::ScreenedOut, RunStatus::Failed].into_iter().find(|v| v.as_str() == s)
    }
}

/// One line of `runs.csv`. Failed runs have no fitted values.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub iterations: Option<usize>,
    pub termination: String,
    pub restarted: Option<bool>,
    pub eps_final: Option<f64>,
    pub m0: Vec<f64>,
    pub final_m: Option<Vec<f64>>,
    pub alpha_norm: Option<Vec<f64>>,
    pub alpha_phys: Option<Vec<f64>>,
    pub intercept: Option<f64>,
    pub reason: String,
}

/// Rows of one stage, sorted by run id.
pub fn run_rows(stage: &StageOutcome) -> Vec<RunRow> {
    let screened = &stage.summary.screened_out_ids;
    let mut rows: Vec<RunRow> = stage
        .ensemble
        .results
        .iter()
        .map(|r| RunRow {
            run_id: r.run_id,
            seed: r.seed,
            status: if screened.contains(&r.run_id) { RunStatus::ScreenedOut } else { RunStatus::Retained },
            iterations: Some(r.trace.iterations),
            termination: r.trace.termination.as_str().into(),
            restarted: Some(r.trace.restarted),
            eps_final: Some(r.eps_final),
            m0: r.m0.clone(),
            final_m: Some(r.trace.final_m.clone()),
            alpha_norm: Some(r.alpha_norm.values.clone()),
            alpha_phys: Some(r.alpha_phys.values.clone()),
            intercept: Some(r.intercept),
            reason: String::new(),
        })
        .chain(stage.ensemble.failures.iter().map(|f: &RunFailure| RunRow {
            run_id: f.run_id,
            seed: f.seed,
            status: RunStatus::Failed,
            iterations: None,
            termination: "failed".into(),
            restarted: None,
            eps_final: None,
            m0: f.m0.clone(),
            final_m: None,
            alpha_norm: None,
            alpha_phys: None,
            intercept: None,
            reason: f.reason.clone(),
        }))
        .collect();
    rows.sort_by_key(|r| r.run_id);
    rows
}

fn runs_header(terms: &[String]) -> Vec<String> {
    let mut h: Vec<String> =
        ["run_id", "seed", "status", "iterations", "termination", "restarted", "eps_final"].map(String::from).to_vec();
    h.extend(PARAM_NAMES.iter().map(|p| format!("{p}_0")));
    h.extend(PARAM_NAMES.iter().map(|p| p.to_string()));
    h.extend(terms.iter().map(|t| format!("norm_{t}")));
    h.extend(terms.iter().map(|t| format!("phys_{t}")));
    h.push("intercept".into());
    h.push("reason".into());
    h
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(String::new, format_f64)
}

pub fn write_runs_csv(path: &Path, terms: &[String], rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(runs_header(terms)).map_err(|e| csv_err(path, e))?;
    let p = PARAM_NAMES.len();
    for r in rows {
        let mut rec = vec![
            r.run_id.to_string(),
            r.seed.to_string(),
            r.status.as_str().into(),
            opt(r.iterations),
            r.termination.clone(),
            opt(r.restarted),
            opt_f64(r.eps_final),
        ];
        rec.extend(r.m0.iter().copied().map(format_f64));
        let blanks = |n: usize| vec![String::new(); n];
        let values = |v: &Option<Vec<f64>>, n: usize| {
            v.as_ref().map_or_else(|| blanks(n), |v| v.iter().copied().map(format_f64).collect())
        };
        rec.extend(values(&r.final_m, p));
        rec.extend(values(&r.alpha_norm, terms.len()));
        rec.extend(values(&r.alpha_phys, terms.len()));
        rec.push(opt_f64(r.intercept));
        rec.push(r.reason.clone());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads `runs.csv`, returning the term ids from the header and the rows.
pub fn read_runs_csv(path: &Path) -> Result<(Vec<String>, Vec<RunRow>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let terms: Vec<String> = header.iter().filter_map(|h| h.strip_prefix("norm_")).map(String::from).collect();
    if header != runs_header(&terms) {
        return Err(parse_err(path, "unexpected runs table header"));
    }
    let p = PARAM_NAMES.len();
    let n = terms.len();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |col: usize| parse_err(path, format!("row {}: bad value in column {}", line + 2, header[col]));
        let field = |col: usize| rec.get(col).unwrap_or("");
        fn parse<T: std::str::FromStr>(s: &str) -> Option<T> {
            s.parse().ok()
        }
        let optional = |col: usize| -> Result<Option<f64>> {
            match field(col) {
                "" => Ok(None),
                s => parse(s).map(Some).ok_or_else(|| bad(col)),
            }
        };
        let block = |start: usize, len: usize| -> Result<Option<Vec<f64>>> {
            let vals: Vec<Option<f64>> = (start..start + len).map(optional).collect::<Result<_>>()?;
            Ok(if vals.iter().all(Option::is_some) { Some(vals.into_iter().flatten().collect()) } else { None })
        };
        let m0_start = 7;
        rows.push(RunRow {
            run_id: parse(field(0)).ok_or_else(|| bad(0))?,
            seed: parse(field(1)).ok_or_else(|| bad(1))?,
            status: RunStatus::parse(field(2)).ok_or_else(|| bad(2))?,
            iterations: match field(3) {
                "" => None,
                s => Some(parse(s).ok_or_else(|| bad(3))?),
            },
            termination: field(4).to_string(),
            restarted: match field(5) {
                "" => None,
                s => Some(parse(s).ok_or_else(|| bad(5))?),
            },
            eps_final: optional(6)?,
            m0: block(m0_start, p)?.ok_or_else(|| bad(m0_start))?,
            final_m: block(m0_start + p, p)?,
            alpha_norm: block(m0_start + 2 * p, n)?,
            alpha_phys: block(m0_start + 2 * p + n, n)?,
            intercept: optional(m0_start + 2 * p + 2 * n)?,
            reason: field(m0_start + 2 * p + 2 * n + 1).to_string(),
        });
    }
    Ok((terms, rows))
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub scenario: String,
    pub library: LibraryName,
    pub noise: NoiseSpec,
    pub master_seed: u64,
    pub n_restarts: usize,
    pub smoothing_passes: usize,
    pub selected_terms: Vec<String>,
    /// Mean coefficients and mean parameters of the final stage.
    pub learned_equation: String,
    pub initial: EnsembleSummary,
    pub refit: Option<EnsembleSummary>,
}

impl SummaryRecord {
    pub fn new(
        scenario: &str,
        library: LibraryName,
        noise: NoiseSpec,
        master_seed: u64,
        n_restarts: usize,
        smoothing_passes: usize,
        outcome: &IdentificationOutcome,
    ) -> Self {
        Self {
            scenario: scenario.into(),
            library,
            noise,
            master_seed,
            n_restarts,
            smoothing_passes,
            selected_terms: outcome.selected_terms.clone(),
            learned_equation: outcome.final_summary().learned_equation.clone(),
            initial: outcome.initial.summary.clone(),
            refit: outcome.refit.as_ref().map(|s| s.summary.clone()),
        }
    }

    pub fn final_summary(&self) -> &EnsembleSummary {
        self.refit.as_ref().unwrap_or(&self.initial)
    }
}

fn trace_path(dir: &Path, stage: &str, run_id: usize) -> PathBuf {
    dir.join(TRACE_DIR).join(format!("{stage}_run_{run_id:04}.json"))
}

/// Writes `runs.csv` (final stage), `runs_initial.csv` (when a refit
/// happened), `summary.json` and one trace file per completed run.
pub fn write_identification(
    dir: &Path,
    record: &SummaryRecord,
    outcome: &IdentificationOutcome,
) -> Result<Vec<PathBuf>> {
    create_dir(&dir.join(TRACE_DIR))?;
    let mut written = Vec::new();
    let mut stages = vec![("initial", &outcome.initial)];
    if let Some(refit) = &outcome.refit {
        stages.push(("refit", refit));
    }
    for (name, stage) in &stages {
        let file = if std::ptr::eq(*stage, outcome.final_stage()) { RUNS_FILE } else { INITIAL_RUNS_FILE };
        let path = dir.join(file);
        write_runs_csv(&path, &stage.ensemble.library.ids(), &run_rows(stage))?;
        written.push(path);
        for r in &stage.ensemble.results {
            let path = trace_path(dir, name, r.run_id);
            write_json(&path, &r.trace)?;
            written.push(path);
        }
    }
    let path = dir.join(SUMMARY_FILE);
    write_json(&path, record)?;
    written.push(path);
    Ok(written)
}

pub fn read_summary(path: &Path) -> Result<SummaryRecord> {
    read_json(path)
}

pub fn read_trace(path: &Path) -> Result<AssimilationTrace> {
    read_json(path)
}

/// Table-style comparison: one row per summary, one column per term that
/// appears in any final summary (library order), then parameter estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn build_report(records: &[SummaryRecord]) -> Report {
    let terms: Vec<&str> = Term::ALL
        .iter()
        .map(|t| t.id())
        .filter(|id| records.iter().any(|r| r.final_summary().term(id).is_some()))
        .collect();
    let mut header: Vec<String> = ["scenario", "library", "noise"].map(String::from).to_vec();
    header.extend(terms.iter().map(|t| t.to_string()));
    for p in PARAM_NAMES {
        header.push(format!("{p}_mean"));
        header.push(format!("{p}_std"));
    }
    header.push("retained".into());
    let rows = records
        .iter()
        .map(|r| {
            let s = r.final_summary();
            let mut row = vec![r.scenario.clone(), r.library.as_str().into(), format_f64(r.noise.delta)];
            row.extend(terms.iter().map(|t| s.term(t).map_or_else(String::new, |ts| format!("{:.4e}", ts.mean_phys))));
            for p in PARAM_NAMES {
                let ps = s.param(p).expect("summaries carry every parameter");
                row.push(format!("{:.4}", ps.mean));
                row.push(format!("{:.4}", ps.std));
            }
            row.push(format!("{}/{}", s.retained_count, r.n_restarts));
            row
        })
        .collect();
    Report { header, rows }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| self.rows.iter().map(|r| r[c].len()).chain([self.header[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}
