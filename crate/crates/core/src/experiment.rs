//! Experiment configuration: a scenario, a library, noise, ensemble and
//! algorithm settings, read from JSON with every key optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assimilation::AssimilationConfig;
use crate::error::{Error, Result};
use crate::identification::{
    DataOptions, IdentificationConfig, DEFAULT_PRUNE_THRESHOLD, DEFAULT_SCREEN_FACTOR, DEFAULT_SPLIT_RATIO,
};
use crate::library::{LibraryName, LibrarySpec};
use crate::preprocess::{NoiseSpec, SmoothingConfig};
use crate::scenario::ScenarioName;
use crate::transport::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioName,
    /// Full parameter block; required for `custom`, not allowed for presets.
    pub scenario_config: Option<ScenarioConfig>,
    pub library: LibraryName,
    pub noise_delta: f64,
    /// Defaults to `master_seed`.
    pub noise_seed: Option<u64>,
    pub n_restarts: usize,
    pub master_seed: u64,
    pub split_ratio: f64,
    pub screen_factor: f64,
    pub prune_threshold: f64,
    pub assimilation: AssimilationConfig,
    pub smoothing: SmoothingConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let id = IdentificationConfig::default();
        Self {
            scenario: ScenarioName::S1,
            scenario_config: None,
            library: LibraryName::Basic,
            noise_delta: 0.0,
            noise_seed: None,
            n_restarts: id.n_restarts,
            master_seed: id.master_seed,
            split_ratio: DEFAULT_SPLIT_RATIO,
            screen_factor: DEFAULT_SCREEN_FACTOR,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            assimilation: AssimilationConfig::default(),
            smoothing: SmoothingConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// Every violated constraint, joined into one message.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        let mut check = |r: Result<()>| {
            if let Err(e) = r {
                bad.push(match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                });
            }
        };
        match (self.scenario, &self.scenario_config) {
            (ScenarioName::Custom, None) => {
                check(Err(Error::Config("scenario `custom` requires scenario_config".into())))
            }
            (ScenarioName::Custom, Some(c)) => check(c.validate()),
            (name, Some(_)) => check(Err(Error::Config(format!(
                "scenario_config is only allowed with scenario `custom` (got `{name}`)"
            )))),
            (_, None) => {}
        }
        if self.library == LibraryName::CustomPruned {
            check(Err(Error::Config("library must be `basic` or `extended`".into())));
        }
        if !(self.noise_delta >= 0.0 && self.noise_delta < 1.0) {
            check(Err(Error::Config(format!("noise_delta {} must lie in [0, 1)", self.noise_delta))));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            check(Err(Error::Config(format!("split_ratio {} must lie in (0, 1)", self.split_ratio))));
        }
        check(self.identification().validate());
        check(self.smoothing.validate());
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        match (self.scenario.preset(), &self.scenario_config) {
            (Some(preset), None) => Ok(preset),
            (None, Some(custom)) => Ok(custom.clone()),
            _ => Err(Error::Config("scenario_config must be given exactly when scenario is `custom`".into())),
        }
    }

    pub fn library_spec(&self) -> Result<LibrarySpec> {
        LibrarySpec::by_name(self.library.as_str())
            .ok_or_else(|| Error::Config(format!("library `{}` cannot be requested directly", self.library.as_str())))
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec { delta: self.noise_delta, seed: self.noise_seed.unwrap_or(self.master_seed) }
    }

    pub fn data_options(&self) -> DataOptions {
        DataOptions { noise: self.noise(), smoothing: self.smoothing, split_ratio: self.split_ratio }
    }

    pub fn identification(&self) -> IdentificationConfig {
        IdentificationConfig {
            n_restarts: self.n_restarts,
            master_seed: self.master_seed,
            assimilation: self.assimilation.clone(),
            screen_factor: self.screen_factor,
            prune_threshold: self.prune_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig {
            scenario: ScenarioName::S3AltKl,
            library: LibraryName::Extended,
            noise_delta: 0.05,
            noise_seed: Some(3),
            n_restarts: 7,
            assimilation: AssimilationConfig { lambda0: 100.0, c_eps: Some(1e-6), ..Default::default() },
            ..Default::default()
        };
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), cfg.to_json());
    }

    #[test]
    fn partial_nested_overrides() {
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario": "s2", "assimilation": {"tau": 0.01}, "smoothing": {"max_passes": 1}}"#,
        )
        .unwrap();
        assert_eq!(cfg.assimilation.tau, 0.01);
        assert_eq!(cfg.assimilation.i_max, 25);
        assert_eq!(cfg.smoothing.max_passes, 1);
        assert_eq!(cfg.scenario_config().unwrap(), ScenarioName::S2.preset().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"n_restart": 3}"#).unwrap_err().to_string();
        assert!(err.contains("n_restart"), "{err}");
        assert!(ExperimentConfig::from_json(r#"{"assimilation": {"lamda0": 3}}"#).is_err());
    }

    #[test]
    fn validation_lists_every_offending_key() {
        let cfg = ExperimentConfig {
            noise_delta: -0.1,
            n_restarts: 0,
            split_ratio: 1.5,
            assimilation: AssimilationConfig { tau: -1.0, ..Default::default() },
            ..Default::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        for key in ["noise_delta", "split_ratio", "tau"] {
            assert!(msg.contains(key), "{key} missing from {msg}");
        }
    }

    #[test]
    fn custom_scenario_needs_its_block() {
        let cfg = ExperimentConfig { scenario: ScenarioName::Custom, ..Default::default() };
        assert!(cfg.validate().is_err());
        let with = ExperimentConfig { scenario_config: ScenarioName::S3.preset(), ..cfg };
        with.validate().unwrap();
        assert_eq!(with.scenario_config().unwrap(), ScenarioName::S3.preset().unwrap());
        let preset_with_block = ExperimentConfig { scenario_config: ScenarioName::S3.preset(), ..Default::default() };
        assert!(preset_with_block.validate().is_err());
        let partial = r#"{"scenario": "custom", "scenario_config": {"v_x": 0.01}}"#;
        assert!(ExperimentConfig::from_json(partial).is_err());
    }

    #[test]
    fn noise_seed_follows_master_seed() {
        let cfg = ExperimentConfig { master_seed: 17, ..Default::default() };
        assert_eq!(cfg.noise().seed, 17);
        assert_eq!(ExperimentConfig { noise_seed: Some(2), ..cfg }.noise().seed, 2);
    }
}
