//! Experiment configuration driving the `pipeline` command.

use std::path::PathBuf;

use rkn_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::estimator::EstimatorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Output name, e.g. `rkn_ref`.
    pub tag: String,
    /// Training mix: `s1`, `s2`, `s3` or a single regime id.
    pub scenario: String,
    /// Seeds both the initialization and the batch shuffles.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    /// Master seed of the test set; training sets use `seed + k` for the
    /// k-th distinct training scenario (k from 1).
    pub seed: u64,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default = "default_train")]
    pub train_episodes: usize,
    #[serde(default = "default_val")]
    pub val_episodes: usize,
    #[serde(default = "default_test")]
    pub test_episodes: usize,
    #[serde(default = "default_test_scenario")]
    pub test_scenario: String,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Kalman baselines evaluated next to the trained models.
    #[serde(default = "default_baselines")]
    pub baselines: Vec<String>,
    #[serde(default = "default_probes")]
    pub probes: Vec<usize>,
}

fn default_length() -> usize {
    150
}
fn default_train() -> usize {
    1000
}
fn default_val() -> usize {
    100
}
fn default_test() -> usize {
    1000
}
fn default_test_scenario() -> String {
    "s1".into()
}
fn default_baselines() -> Vec<String> {
    vec!["kf:oracle".into(), "kf:fixed=1".into()]
}
fn default_probes() -> Vec<usize> {
    rkn_core::eval::DEFAULT_PROBES.to_vec()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::usage(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.length == 0 || self.train_episodes == 0 || self.val_episodes == 0 || self.test_episodes == 0 {
            return Err(CliError::usage("episode counts and length must be positive"));
        }
        if self.models.is_empty() {
            return Err(CliError::usage("no models to train"));
        }
        let mut tags: Vec<&str> = self.models.iter().map(|m| m.tag.as_str()).collect();
        tags.sort_unstable();
        if tags.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::usage("model tags must be distinct"));
        }
        for m in &self.models {
            if m.tag.is_empty() || !m.tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(CliError::usage(format!("bad model tag {:?}", m.tag)));
            }
            rkn_core::ssm::named_mix(&m.scenario, 2)?;
        }
        rkn_core::ssm::named_mix(&self.test_scenario, 2)?;
        for b in &self.baselines {
            match b.parse::<EstimatorSpec>() {
                Ok(EstimatorSpec::Rkn(_)) => {
                    return Err(CliError::usage(format!("baseline {b:?}: trained models go under `models`")))
                }
                Ok(_) => {}
                Err(e) => return Err(CliError::usage(e.to_string())),
            }
        }
        if let Some(p) = self.probes.iter().find(|&&p| p >= self.length) {
            return Err(CliError::usage(format!("probe {p} is beyond the episode length {}", self.length)));
        }
        self.train.validate()?;
        Ok(())
    }

    /// Distinct training scenarios in first-seen order.
    pub fn training_scenarios(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for m in &self.models {
            if !out.contains(&m.scenario.as_str()) {
                out.push(&m.scenario);
            }
        }
        out
    }
}
