//! Likelihood-gap estimation for denoising diffusion models, with affine
//! denoisers on Gaussian data so that exact likelihoods are available for
//! comparison.

mod denoiser;
mod estimator;
mod exact;
mod schedule;

pub use denoiser::{optimal_denoiser, AffineDenoiser};
pub use estimator::{
    default_timesteps, fade_diffusion, fade_from_trace, DiffusionFadeOptions, LossTrace, TraceRow, MSE_CONVENTION,
};
pub use exact::{
    exact_loglik_linear_gaussian, gaussian_jeffreys, gaussian_kl, generative_marginal, negative_elbo, ElboTerms,
    GaussianMarginal,
};
pub use schedule::{build_schedule, BetaSpec, NoiseSchedule};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid noise schedule: {0}")]
    InvalidBeta(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty sample set")]
    EmptySample,
    #[error("covariance is singular or not positive semi-definite: {0}")]
    SingularCovariance(String),
    #[error("timestep {t} is outside 2..={max}")]
    InvalidTimestep { t: usize, max: usize },
    #[error("trace for sample `{0}` mixes origins or is inconsistent")]
    InconsistentTrace(String),
}
