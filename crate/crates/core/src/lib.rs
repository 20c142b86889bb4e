//! Bidirectional likelihood-gap estimation for comparing an unlearned
//! generative model against a retain-only reference model.
//!
//! The crate is organised around the quantity
//!
//! ```text
//! FADE = E_{x ~ p_retain}[log p_retain(x) - log p_unlearned(x)]
//!      + E_{x ~ p_unlearned}[log p_unlearned(x) - log p_retain(x)]
//! ```
//!
//! estimated by Monte Carlo from paired log-likelihood records
//! ([`divergence`]), together with the reference-based forget-quality metric
//! ([`stats`], [`lm::truth_ratio`]) and two families of toy generative models
//! whose likelihoods are exactly computable ([`lm`], [`diffusion`]).

pub mod diffusion;
pub mod divergence;
pub mod format;
pub mod lm;
pub mod record;
pub mod seed;
pub mod stats;

pub use divergence::{
    baseline_fade, bootstrap_ci, bootstrap_dataset_ci, dataset_fade, exact_jeffreys_autoregressive,
    exact_jeffreys_categorical, fade_for_prompt, DatasetFade, DivergenceError, FadeEstimate,
};
pub use record::{LikelihoodRecord, ModelTag};
pub use seed::SeedStream;
pub use stats::{forget_quality, ks_pvalue, ks_statistic, ForgetQuality, KsError, KsMode, KsResult};

/// Natural log of the smallest positive subnormal double, rounded down.
/// Log-probabilities of zero-probability events are floored here.
pub const LOGP_FLOOR: f64 = -745.0;
