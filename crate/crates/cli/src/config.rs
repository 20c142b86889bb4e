//! Flat key-value scenario configuration files with an explicit schema version.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

/// Parse and check a configuration file.
pub fn load<T: DeserializeOwned + Validate>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text).map_err(|e| match e {
        CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse<T: DeserializeOwned + Validate>(text: &str) -> Result<T> {
    let config: T = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e.message())))?;
    config
        .validate()
        .map_err(|(field, msg)| CliError::Validation(format!("config.{field}: {msg}")))?;
    Ok(config)
}

pub trait Validate {
    /// `Err((field, message))` for the first invalid field.
    fn validate(&self) -> std::result::Result<(), (&'static str, String)>;
}

fn check(ok: bool, field: &'static str, msg: impl Into<String>) -> std::result::Result<(), (&'static str, String)> {
    if ok {
        Ok(())
    } else {
        Err((field, msg.into()))
    }
}

fn check_version(v: u32) -> std::result::Result<(), (&'static str, String)> {
    check(
        v == CONFIG_SCHEMA_VERSION,
        "schema_version",
        format!("unsupported version {v} (expected {CONFIG_SCHEMA_VERSION})"),
    )
}

/// Toy QA scenario: world, training, unlearning and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TofuConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub n_profiles: usize,
    pub qa_per_profile: usize,
    pub vocab_size: usize,
    pub forget_fraction: f64,
    pub n_perturbed: usize,
    /// Context length of the tabular models.
    pub order: usize,
    pub smoothing: f64,
    /// Probability that an item appears twice in a training corpus.
    pub jitter: f64,
    /// Log-factor applied per unlearning epoch.
    pub strength: f64,
    pub epochs: usize,
    /// Retain models trained with distinct data seeds; the seed baseline
    /// averages over all pairs of them.
    pub retain_seeds: usize,
    pub samples_per_prompt: usize,
    pub max_new_tokens: usize,
}

impl Default for TofuConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            n_profiles: 100,
            qa_per_profile: 20,
            vocab_size: 64,
            forget_fraction: 0.01,
            n_perturbed: 3,
            order: 2,
            smoothing: 0.1,
            jitter: 0.005,
            strength: 1.0,
            epochs: 5,
            retain_seeds: 2,
            samples_per_prompt: 100,
            max_new_tokens: 128,
        }
    }
}

impl Validate for TofuConfig {
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        check_version(self.schema_version)?;
        check(self.n_profiles >= 1, "n_profiles", "must be at least 1")?;
        check(self.qa_per_profile >= 1, "qa_per_profile", "must be at least 1")?;
        check(
            self.forget_fraction > 0.0 && self.forget_fraction < 1.0,
            "forget_fraction",
            "must lie in (0, 1)",
        )?;
        check(self.n_perturbed >= 1, "n_perturbed", "must be at least 1")?;
        check(
            self.smoothing > 0.0 && self.smoothing.is_finite(),
            "smoothing",
            "must be positive",
        )?;
        check((0.0..=1.0).contains(&self.jitter), "jitter", "must lie in [0, 1]")?;
        check(
            self.strength > 0.0 && self.strength.is_finite(),
            "strength",
            "must be positive",
        )?;
        check(self.epochs >= 1, "epochs", "must be at least 1")?;
        check(
            self.retain_seeds >= 2,
            "retain_seeds",
            "at least 2 are needed for a seed baseline",
        )?;
        check(self.samples_per_prompt >= 1, "samples_per_prompt", "must be at least 1")?;
        check(self.max_new_tokens >= 1, "max_new_tokens", "must be at least 1")?;
        Ok(())
    }
}

/// Linear-Gaussian diffusion scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Number of random retain/unlearned model pairs.
    pub pairs: usize,
    /// Data dimension of each pair is drawn from `1..=max_dim`.
    pub max_dim: usize,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Samples drawn from each model's exact marginal.
    pub samples: usize,
    /// Noise draws per (sample, timestep).
    pub draws: usize,
    /// Scale of the mean offset between the two data distributions.
    pub mean_shift: f64,
    /// Relative scale of the covariance perturbation between the two.
    pub cov_shift: f64,
    /// Relative error tolerated against the exact Jeffreys divergence.
    pub tolerance: f64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            pairs: 20,
            max_dim: 3,
            steps: 50,
            beta_start: 1e-3,
            beta_end: 0.2,
            samples: 2000,
            draws: 1,
            mean_shift: 1.0,
            cov_shift: 0.3,
            tolerance: 0.25,
        }
    }
}

impl Validate for GaussianConfig {
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        check_version(self.schema_version)?;
        check(self.pairs >= 1, "pairs", "must be at least 1")?;
        check(self.max_dim >= 1, "max_dim", "must be at least 1")?;
        check(self.steps >= 2, "steps", "must be at least 2")?;
        check(
            self.beta_start > 0.0 && self.beta_start < 1.0,
            "beta_start",
            "must lie in (0, 1)",
        )?;
        check(
            self.beta_end > 0.0 && self.beta_end < 1.0,
            "beta_end",
            "must lie in (0, 1)",
        )?;
        check(self.samples >= 2, "samples", "must be at least 2")?;
        check(self.draws >= 1, "draws", "must be at least 1")?;
        check(
            self.mean_shift >= 0.0 && self.mean_shift.is_finite(),
            "mean_shift",
            "must be non-negative",
        )?;
        check((0.0..1.0).contains(&self.cov_shift), "cov_shift", "must lie in [0, 1)")?;
        check(self.tolerance > 0.0, "tolerance", "must be positive")?;
        Ok(())
    }
}
