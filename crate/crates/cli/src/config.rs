//! Experiment configuration: a JSON file mirroring [`ExperimentConfig`]
//! field-for-field. Unknown keys are rejected.

use ope_abstract::dice::{DiceConfig, OptimizerKind, Parameterization};
use ope_abstract::twopath::TwoPathVariant;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// MSE vs batch size for the true-ratio estimators (ground vs abstract).
    TrueRatioMse,
    /// AbstractBestDICE density recovery scatter at a fixed batch size.
    RatioCorrelation,
    /// Assumption reports plus DICE ratio-estimation error per TwoPath variant.
    ViolationSuite,
    /// MSE vs batch size for the fitted DICE estimators.
    DiceMseSweep,
    /// MSE across the learning-rate grid at a fixed (small) batch size.
    HyperparamGrid,
    /// The theorem property battery over random MDP families.
    TheoremSuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TrueRatioMse => "true_ratio_mse",
            ExperimentKind::RatioCorrelation => "ratio_correlation",
            ExperimentKind::ViolationSuite => "violation_suite",
            ExperimentKind::DiceMseSweep => "dice_mse_sweep",
            ExperimentKind::HyperparamGrid => "hyperparam_grid",
            ExperimentKind::TheoremSuite => "theorem_suite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Only "twopath" is built in.
    pub name: String,
    #[serde(default)]
    pub variant: TwoPathVariant,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec { name: "twopath".into(), variant: TwoPathVariant::Baseline }
    }
}

/// Solver settings carried by the config file; anything omitted falls back to
/// the library defaults. The discount always comes from the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiceSettings {
    pub alpha_nu: Option<f64>,
    pub alpha_zeta: Option<f64>,
    pub alpha_lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub minibatch: Option<usize>,
    pub log_interval: Option<usize>,
    /// "adam" (default) or "sgd".
    pub optimizer: Option<String>,
}

impl DiceSettings {
    pub fn to_config(&self, gamma: f64) -> DiceConfig {
        let defaults = DiceConfig::default();
        DiceConfig {
            alpha_nu: self.alpha_nu.unwrap_or(defaults.alpha_nu),
            alpha_zeta: self.alpha_zeta.unwrap_or(defaults.alpha_zeta),
            alpha_lambda: self.alpha_lambda.unwrap_or(defaults.alpha_lambda),
            gamma,
            epochs: self.epochs.unwrap_or(defaults.epochs),
            minibatch: self.minibatch.unwrap_or(defaults.minibatch),
            parameterization: Parameterization::Tabular,
            optimizer: match self.optimizer.as_deref() {
                Some("sgd") => OptimizerKind::Sgd,
                _ => OptimizerKind::AdaptiveMoments,
            },
            seed: 0,
            log_interval: self.log_interval.unwrap_or(defaults.log_interval),
            divergence_guard: defaults.divergence_guard,
        }
    }
}

fn default_n_trials() -> usize {
    15
}

fn default_horizon() -> usize {
    100
}

fn default_batch_sizes() -> Vec<usize> {
    vec![5, 10, 50, 100, 300]
}

fn default_n_instances() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub domain: DomainSpec,
    #[serde(default = "default_batch_sizes")]
    pub batch_sizes: Vec<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_n_trials")]
    pub n_trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dice: Option<DiceSettings>,
    /// `(alpha_nu, alpha_zeta)` grid for the hyperparameter experiment.
    #[serde(default)]
    pub grid: Option<Vec<(f64, f64)>>,
    /// Instance count for the theorem suite.
    #[serde(default = "default_n_instances")]
    pub n_instances: usize,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// The learning-rate pairs searched by the reference experiments.
pub const DEFAULT_GRID: [(f64, f64); 5] =
    [(5e-5, 5e-5), (1e-4, 1e-4), (3e-4, 3e-4), (7e-4, 7e-4), (1e-3, 1e-3)];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.batch_sizes.is_empty() {
            return Err(ConfigError::Invalid("batch_sizes must be non-empty".into()));
        }
        if self.n_trials < 1 {
            return Err(ConfigError::Invalid("n_trials must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        if self.domain.name != "twopath" {
            return Err(ConfigError::Invalid(format!(
                "unknown domain '{}'; only 'twopath' is built in",
                self.domain.name
            )));
        }
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                return Err(ConfigError::Invalid("grid must be non-empty when given".into()));
            }
        }
        Ok(())
    }

    /// The effective learning-rate grid for [`ExperimentKind::HyperparamGrid`].
    pub fn effective_grid(&self) -> Vec<(f64, f64)> {
        self.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec())
    }
}
