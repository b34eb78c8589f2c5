//! Candidate-term libraries and the regression system they induce.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::preprocess::DerivPoint;

/// Physical process a candidate term stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Process {
    #[serde(rename = "ADV")]
    Advection,
    #[serde(rename = "DIS")]
    Dispersion,
    #[serde(rename = "F-SORP")]
    FreundlichSorption,
    #[serde(rename = "L-SORP")]
    LangmuirSorption,
    #[serde(rename = "AUX")]
    Auxiliary,
}

impl Process {
    pub fn label(&self) -> &'static str {
        match self {
            Process::Advection => "ADV",
            Process::Dispersion => "DIS",
            Process::FreundlichSorption => "F-SORP",
            Process::LangmuirSorption => "L-SORP",
            Process::Auxiliary => "AUX",
        }
    }
}

/// A candidate right-hand-side term of `∂C/∂t = Σ α_j φ_j(C, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    #[serde(rename = "C")]
    C,
    #[serde(rename = "C2")]
    C2,
    #[serde(rename = "C_x")]
    Cx,
    #[serde(rename = "C_xx")]
    Cxx,
    #[serde(rename = "C_xxx")]
    Cxxx,
    #[serde(rename = "C2_x")]
    C2x,
    #[serde(rename = "C2_xx")]
    C2xx,
    #[serde(rename = "C2_xxx")]
    C2xxx,
    /// `C^(a−1) ∂C/∂t`
    #[serde(rename = "F_SORP")]
    FreundlichSorption,
    /// `∂C/∂t / (1 + K_l C)²`
    #[serde(rename = "L_SORP")]
    LangmuirSorption,
}

impl Term {
    pub const ALL: [Term; 10] = [
        Term::C,
        Term::C2,
        Term::Cx,
        Term::Cxx,
        Term::Cxxx,
        Term::C2x,
        Term::C2xx,
        Term::C2xxx,
        Term::FreundlichSorption,
        Term::LangmuirSorption,
    ];

    /// Stable identifier used in files.
    pub fn id(&self) -> &'static str {
        match self {
            Term::C => "C",
            Term::C2 => "C2",
            Term::Cx => "C_x",
            Term::Cxx => "C_xx",
            Term::Cxxx => "C_xxx",
            Term::C2x => "C2_x",
            Term::C2xx => "C2_xx",
            Term::C2xxx => "C2_xxx",
            Term::FreundlichSorption => "F_SORP",
            Term::LangmuirSorption => "L_SORP",
        }
    }

    pub fn from_id(id: &str) -> Option<Term> {
        Term::ALL.into_iter().find(|t| t.id() == id)
    }

    pub fn process(&self) -> Process {
        match self {
            Term::Cx => Process::Advection,
            Term::Cxx => Process::Dispersion,
            Term::FreundlichSorption => Process::FreundlichSorption,
            Term::LangmuirSorption => Process::LangmuirSorption,
            _ => Process::Auxiliary,
        }
    }

    /// Indices into the parameter vector that the term depends on.
    pub fn parameter_deps(&self) -> &'static [usize] {
        match self {
            Term::FreundlichSorption => &[0],
            Term::LangmuirSorption => &[1],
            _ => &[],
        }
    }

    /// Human-readable form; `m` fills in the embedded parameters.
    pub fn display(&self, m: &ModelParams) -> String {
        match self {
            Term::C => "C".into(),
            Term::C2 => "C^2".into(),
            Term::Cx => "dC/dx".into(),
            Term::Cxx => "d2C/dx2".into(),
            Term::Cxxx => "d3C/dx3".into(),
            Term::C2x => "d(C^2)/dx".into(),
            Term::C2xx => "d2(C^2)/dx2".into(),
            Term::C2xxx => "d3(C^2)/dx3".into(),
            Term::FreundlichSorption => format!("C^({:.3}-1) dC/dt", m.a),
            Term::LangmuirSorption => format!("1/(1+{:.3}C)^2 dC/dt", m.k_l),
        }
    }

    #[inline]
    pub fn evaluate(&self, p: &DerivPoint, m: &ModelParams) -> f64 {
        match self {
            Term::C => p.c,
            Term::C2 => p.c * p.c,
            Term::Cx => p.c_x,
            Term::Cxx => p.c_xx,
            Term::Cxxx => p.c_xxx,
            Term::C2x => p.c2_x,
            Term::C2xx => p.c2_xx,
            Term::C2xxx => p.c2_xxx,
            Term::FreundlichSorption => p.c.powf(m.a - 1.0) * p.c_t,
            Term::LangmuirSorption => {
                let d = 1.0 + m.k_l * p.c;
                p.c_t / (d * d)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LibraryName {
    Basic,
    Extended,
    CustomPruned,
}

impl LibraryName {
    pub fn as_str(&self) -> &'static str {
        match self {
            LibraryName::Basic => "basic",
            LibraryName::Extended => "extended",
            LibraryName::CustomPruned => "custom-pruned",
        }
    }
}

/// Ordered list of candidate terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub name: LibraryName,
    pub terms: Vec<Term>,
}

impl LibrarySpec {
    /// ADV, DIS, F-SORP, L-SORP.
    pub fn basic() -> Self {
        Self {
            name: LibraryName::Basic,
            terms: vec![Term::Cx, Term::Cxx, Term::FreundlichSorption, Term::LangmuirSorption],
        }
    }

    /// The ten-term library with auxiliary `C`/`C²` terms.
    pub fn extended() -> Self {
        Self { name: LibraryName::Extended, terms: Term::ALL.to_vec() }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "basic" => Some(Self::basic()),
            "extended" => Some(Self::extended()),
            _ => None,
        }
    }

    pub fn custom(terms: Vec<Term>) -> Result<Self> {
        let spec = Self { name: LibraryName::CustomPruned, terms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Config("candidate library is empty".into()));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(Error::Config(format!("duplicate term `{}` in library", t.id())));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.id().to_string()).collect()
    }

    /// Whether any term depends on parameter `i`.
    pub fn depends_on(&self, i: usize) -> bool {
        self.terms.iter().any(|t| t.parameter_deps().contains(&i))
    }

    pub fn has_parameters(&self) -> bool {
        (0..ModelParams::LEN).any(|i| self.depends_on(i))
    }
}

/// Feature matrix `Φ` and target `∂C/∂t`, one row per derivative point.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub phi: DMatrix<f64>,
    pub y: DVector<f64>,
    pub terms: Vec<Term>,
    /// Index of the source point for each row.
    pub point_index: Vec<usize>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn term_ids(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.id().to_string()).collect()
    }
}

/// Evaluates every library term at every point with parameters `m`.
pub fn evaluate_terms(points: &[DerivPoint], m: &ModelParams, spec: &LibrarySpec) -> Result<DesignMatrix> {
    let n = points.len();
    let p = spec.len();
    let mut phi = DMatrix::zeros(n, p);
    for (j, term) in spec.terms.iter().enumerate() {
        let mut col = phi.column_mut(j);
        for (i, pt) in points.iter().enumerate() {
            let v = term.evaluate(pt, m);
            if !v.is_finite() {
                return Err(Error::NonFinite { term: term.id().into(), row: i });
            }
            col[i] = v;
        }
    }
    let y = DVector::from_iterator(n, points.iter().map(|p| p.c_t));
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { term: "C_t".into(), row: i });
    }
    Ok(DesignMatrix { phi, y, terms: spec.terms.clone(), point_index: (0..n).collect() })
}

/// Column and target statistics used to z-score the system (population std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub col_mean: Vec<f64>,
    pub col_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl NormalizationStats {
    /// Statistics of `dm` without transforming it.
    pub fn of(dm: &DesignMatrix) -> Result<Self> {
        let n = dm.rows();
        if n == 0 {
            return Err(Error::Empty("design matrix has no rows".into()));
        }
        let mut col_mean = Vec::with_capacity(dm.terms.len());
        let mut col_std = Vec::with_capacity(dm.terms.len());
        for (j, term) in dm.terms.iter().enumerate() {
            let (mean, std) = mean_std(dm.phi.column(j).iter().copied(), n);
            if !(std > 0.0) {
                return Err(Error::ZeroVariance(term.id().into()));
            }
            col_mean.push(mean);
            col_std.push(std);
        }
        let (y_mean, y_std) = mean_std(dm.y.iter().copied(), n);
        if !(y_std > 0.0) {
            return Err(Error::ZeroVariance("C_t".into()));
        }
        Ok(Self { col_mean, col_std, y_mean, y_std })
    }

    /// Applies these statistics to another matrix with the same columns.
    pub fn apply(&self, dm: &DesignMatrix) -> Result<DesignMatrix> {
        if dm.terms.len() != self.col_mean.len() {
            return Err(Error::Dimension(format!(
                "{} columns vs {} normalization entries",
                dm.terms.len(),
                self.col_mean.len()
            )));
        }
        let mut out = dm.clone();
        for j in 0..dm.terms.len() {
            let (m, s) = (self.col_mean[j], self.col_std[j]);
            out.phi.column_mut(j).apply(|v| *v = (*v - m) / s);
        }
        let (m, s) = (self.y_mean, self.y_std);
        out.y.apply(|v| *v = (*v - m) / s);
        Ok(out)
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Z-scores every column and the target.
pub fn normalize_design(dm: &DesignMatrix) -> Result<(DesignMatrix, NormalizationStats)> {
    let stats = NormalizationStats::of(dm)?;
    let out = stats.apply(dm)?;
    Ok((out, stats))
}
