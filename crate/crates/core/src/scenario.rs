//! Named transport scenarios.

use serde::{Deserialize, Serialize};

use crate::isotherm::SorptionModel;
use crate::transport::ScenarioConfig;

/// Preset scenarios. `S1` is advection–dispersion only, `S2` adds Freundlich
/// sorption, `S3` adds Langmuir sorption; the remaining presets vary one
/// parameter of `S2`/`S3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    S1,
    S2,
    S3,
    S2AltKf,
    S3AltKl,
    S2Fast,
    S3Fast,
    Custom,
}

impl ScenarioName {
    pub const PRESETS: [ScenarioName; 7] = [
        ScenarioName::S1,
        ScenarioName::S2,
        ScenarioName::S3,
        ScenarioName::S2AltKf,
        ScenarioName::S3AltKl,
        ScenarioName::S2Fast,
        ScenarioName::S3Fast,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::S1 => "s1",
            ScenarioName::S2 => "s2",
            ScenarioName::S3 => "s3",
            ScenarioName::S2AltKf => "s2_alt_kf",
            ScenarioName::S3AltKl => "s3_alt_kl",
            ScenarioName::S2Fast => "s2_fast",
            ScenarioName::S3Fast => "s3_fast",
            ScenarioName::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::PRESETS.into_iter().chain([ScenarioName::Custom]).find(|n| n.as_str() == s)
    }

    /// Parameter set bound to a preset; `None` for `Custom`.
    pub fn preset(&self) -> Option<ScenarioConfig> {
        let freundlich = SorptionModel::Freundlich { k_f: 0.05, a: 0.7 };
        let langmuir = SorptionModel::Langmuir { k_l: 100.0, s_bar: 0.003 };
        let cfg = match self {
            ScenarioName::S1 => base(SorptionModel::None),
            ScenarioName::S2 => base(freundlich),
            ScenarioName::S3 => base(langmuir),
            ScenarioName::S2AltKf => base(SorptionModel::Freundlich { k_f: 0.1, a: 0.7 }),
            ScenarioName::S3AltKl => base(SorptionModel::Langmuir { k_l: 60.0, s_bar: 0.003 }),
            ScenarioName::S2Fast => fast(freundlich),
            ScenarioName::S3Fast => fast(langmuir),
            ScenarioName::Custom => return None,
        };
        Some(cfg)
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn base(sorption: SorptionModel) -> ScenarioConfig {
    ScenarioConfig {
        v_x: 0.01,
        alpha_l: 1.0,
        theta: 0.37,
        rho_b: 1.587,
        t0: 160.0,
        c0: 0.05,
        sorption,
        sim_domain_length: 40.0,
        sim_dx: 0.04,
        sim_dt: 0.1,
        meas_x_count: 101,
        meas_dx: 0.16,
        meas_t_start: 300.0,
        meas_t_end: 1100.0,
        meas_dt: 0.5,
        conc_floor: 5e-5,
    }
}

fn fast(sorption: SorptionModel) -> ScenarioConfig {
    ScenarioConfig { v_x: 0.05, meas_t_start: 180.0, meas_t_end: 300.0, meas_dt: 0.1, ..base(sorption) }
}

/// True physical coefficients of the generating process, keyed by process:
/// `(ADV, DIS, F-SORP, L-SORP)`; absent processes are zero.
pub fn true_coefficients(cfg: &ScenarioConfig) -> [f64; 4] {
    let r = cfg.sorption_ratio();
    let (f, l) = match cfg.sorption {
        SorptionModel::None => (0.0, 0.0),
        SorptionModel::Freundlich { k_f, a } => (-r * a * k_f, 0.0),
        SorptionModel::Langmuir { k_l, s_bar } => (0.0, -r * k_l * s_bar),
    };
    [-cfg.v_x, cfg.dispersion(), f, l]
}
