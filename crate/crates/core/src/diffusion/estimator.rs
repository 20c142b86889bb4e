//! FADE for diffusion models from paired denoising losses.
//!
//! For `x_0` drawn from the retain model, the log-likelihood ratio
//! `log p_retain(x_0) - log p_unlearned(x_0)` is approximated by
//! `sum_t gamma_t (|eps - eps_u(x_t, t)|^2 - |eps - eps_r(x_t, t)|^2)`, with the
//! same noised input `x_t` fed to both denoisers. The reverse direction swaps
//! the roles.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AffineDenoiser, DiffusionError, NoiseSchedule};
use crate::divergence::FadeEstimate;
use crate::record::ModelTag;
use crate::seed::SeedStream;

/// Squared L2 norm summed over dimensions.
pub const MSE_CONVENTION: &str = "squared L2 norm summed over dimensions";

/// Number of timesteps evaluated by default on long schedules.
const DEFAULT_TIMESTEP_COUNT: usize = 100;

/// One paired loss measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sample_id: String,
    pub origin: ModelTag,
    pub t: usize,
    pub mse_retain: f64,
    pub mse_unlearned: f64,
    pub gamma: f64,
}

impl TraceRow {
    /// `gamma * (mse_other - mse_own)`, the row's contribution to its
    /// sample's log-likelihood ratio of generator over the other model.
    pub fn own_log_ratio_contribution(&self) -> f64 {
        match self.origin {
            ModelTag::Retain => self.gamma * (self.mse_unlearned - self.mse_retain),
            ModelTag::Unlearned => self.gamma * (self.mse_retain - self.mse_unlearned),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
    /// Both denoisers saw identical noised inputs for each `(sample, t)`.
    pub shared_noise: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionFadeOptions {
    /// Timesteps to evaluate; `None` selects [`default_timesteps`].
    pub timesteps: Option<Vec<usize>>,
    pub noise_seed: u64,
    /// Independent noise draws per `(sample, t)`.
    pub draws: usize,
}

impl Default for DiffusionFadeOptions {
    fn default() -> Self {
        Self {
            timesteps: None,
            noise_seed: 0,
            draws: 1,
        }
    }
}

/// Every timestep in `2..=T` when `T <= 101`, otherwise 100 timesteps spread
/// uniformly over `2..=T`.
pub fn default_timesteps(steps: usize) -> Vec<usize> {
    let available = steps.saturating_sub(1);
    if available <= DEFAULT_TIMESTEP_COUNT {
        return (2..=steps).collect();
    }
    let span = (steps - 2) as f64;
    let last = (DEFAULT_TIMESTEP_COUNT - 1) as f64;
    let mut ts: Vec<usize> = (0..DEFAULT_TIMESTEP_COUNT)
        .map(|k| 2 + (k as f64 * span / last).round() as usize)
        .collect();
    ts.dedup();
    ts
}

/// Bidirectional diffusion FADE with shared noise per `(sample, t)`.
pub fn fade_diffusion(
    retain: &AffineDenoiser,
    unlearned: &AffineDenoiser,
    samples_retain: &[DVector<f64>],
    samples_unlearned: &[DVector<f64>],
    schedule: &NoiseSchedule,
    options: &DiffusionFadeOptions,
) -> Result<(FadeEstimate, LossTrace), DiffusionError> {
    if samples_retain.is_empty() || samples_unlearned.is_empty() {
        return Err(DiffusionError::EmptySample);
    }
    let d = retain.dim();
    for den in [retain, unlearned] {
        if den.dim() != d {
            return Err(DiffusionError::DimensionMismatch {
                expected: d,
                got: den.dim(),
            });
        }
        if den.steps() != schedule.steps() {
            return Err(DiffusionError::DimensionMismatch {
                expected: schedule.steps(),
                got: den.steps(),
            });
        }
    }
    if let Some(x) = samples_retain.iter().chain(samples_unlearned).find(|x| x.len() != d) {
        return Err(DiffusionError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let timesteps = match &options.timesteps {
        Some(ts) => ts.clone(),
        None => default_timesteps(schedule.steps()),
    };
    if let Some(&t) = timesteps.iter().find(|&&t| t < 2 || t > schedule.steps()) {
        return Err(DiffusionError::InvalidTimestep {
            t,
            max: schedule.steps(),
        });
    }
    let draws = options.draws.max(1);
    let seeds = SeedStream::new(options.noise_seed);

    let mut rows = Vec::with_capacity((samples_retain.len() + samples_unlearned.len()) * timesteps.len() * draws);
    for (origin, samples, prefix, stream_base) in [
        (ModelTag::Retain, samples_retain, "r", 0u64),
        (ModelTag::Unlearned, samples_unlearned, "u", 1u64 << 40),
    ] {
        for (i, x0) in samples.iter().enumerate() {
            let mut rng = seeds.rng(stream_base + i as u64);
            let sample_id = format!("{prefix}{i}");
            for &t in &timesteps {
                let ab = schedule.alpha_bar(t);
                for _ in 0..draws {
                    let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let xt = x0 * ab.sqrt() + &eps * (1.0 - ab).sqrt();
                    rows.push(TraceRow {
                        sample_id: sample_id.clone(),
                        origin,
                        t,
                        mse_retain: (&eps - retain.predict(&xt, t)).norm_squared(),
                        mse_unlearned: (&eps - unlearned.predict(&xt, t)).norm_squared(),
                        gamma: schedule.gamma(t),
                    });
                }
            }
        }
    }
    let estimate = fade_from_trace(&rows)?;
    Ok((
        estimate,
        LossTrace {
            rows,
            shared_noise: true,
        },
    ))
}

/// `(t, summed contribution, draws)`.
type TimestepSum = (usize, f64, usize);

/// Recompute a FADE estimate from trace rows.
///
/// Rows sharing `(sample_id, origin, t)` are repeated noise draws and are
/// averaged; each sample's value is the sum over its timesteps.
pub fn fade_from_trace(rows: &[TraceRow]) -> Result<FadeEstimate, DiffusionError> {
    if rows.is_empty() {
        return Err(DiffusionError::EmptySample);
    }
    // per sample, in first-appearance order: (origin, per-t (sum, count))
    let mut index: HashMap<(&str, ModelTag), usize> = HashMap::new();
    let mut samples: Vec<(ModelTag, Vec<TimestepSum>)> = Vec::new();
    for row in rows {
        let slot = *index.entry((row.sample_id.as_str(), row.origin)).or_insert_with(|| {
            samples.push((row.origin, Vec::new()));
            samples.len() - 1
        });
        let per_t = &mut samples[slot].1;
        let contribution = row.own_log_ratio_contribution();
        match per_t.iter_mut().find(|(t, _, _)| *t == row.t) {
            Some(entry) => {
                entry.1 += contribution;
                entry.2 += 1;
            }
            None => per_t.push((row.t, contribution, 1)),
        }
    }
    let mut forward = Vec::new();
    let mut reverse = Vec::new();
    for (origin, per_t) in samples {
        let value: f64 = per_t.iter().map(|(_, sum, n)| sum / *n as f64).sum();
        match origin {
            ModelTag::Retain => forward.push(value),
            ModelTag::Unlearned => reverse.push(value),
        }
    }
    if forward.is_empty() || reverse.is_empty() {
        return Err(DiffusionError::EmptySample);
    }
    Ok(FadeEstimate::from_log_ratios(&forward, &reverse))
}
