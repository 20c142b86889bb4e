//! Linear-Gaussian diffusion scenario.
//!
//! Each pair consists of the Bayes-optimal affine denoisers for two random
//! Gaussian data distributions. Their generative marginals are Gaussian and
//! known exactly, so the loss-based FADE estimate can be compared with the
//! closed-form Jeffreys divergence between the two models.

use fade_core::diffusion::{
    build_schedule, fade_diffusion, gaussian_kl, generative_marginal, negative_elbo, optimal_denoiser, AffineDenoiser,
    BetaSpec, DiffusionFadeOptions, GaussianMarginal, NoiseSchedule,
};
use fade_core::{FadeEstimate, SeedStream};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::GaussianConfig;
use crate::error::{CliError, Result};
use crate::report::Table;

/// Samples per model used for the variational-gap diagnostics.
const GAP_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub index: usize,
    pub dim: usize,
    pub exact_forward: f64,
    pub exact_reverse: f64,
    pub exact_jeffreys: f64,
    pub estimate: FadeEstimate,
    pub relative_error: f64,
    /// Both directional estimates are positive, like the exact KL terms.
    pub sign_match: bool,
    /// Mean of negative ELBO minus exact NLL on the model's own samples.
    pub gap_retain: f64,
    pub gap_unlearned: f64,
    /// Decoder-term contribution to the bound difference, which the
    /// loss-based estimate leaves out.
    pub decoder_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianRun {
    pub timesteps: Vec<usize>,
    pub pairs: Vec<PairResult>,
    pub tolerance: f64,
}

impl GaussianRun {
    pub fn sign_matches(&self) -> usize {
        self.pairs.iter().filter(|p| p.sign_match).count()
    }

    pub fn within_tolerance(&self) -> usize {
        self.pairs.iter().filter(|p| p.relative_error <= self.tolerance).count()
    }

    pub fn pair_table(&self) -> Table {
        let mut t = Table::new(
            "pairs",
            &[
                "pair",
                "dim",
                "exact_jeffreys",
                "fade",
                "fade_se",
                "relative_error",
                "exact_forward",
                "estimate_forward",
                "exact_reverse",
                "estimate_reverse",
                "sign_match",
                "gap_retain",
                "gap_unlearned",
                "decoder_term",
            ],
        );
        for p in &self.pairs {
            t.push(vec![
                p.index.into(),
                p.dim.into(),
                p.exact_jeffreys.into(),
                p.estimate.fade.into(),
                p.estimate.combined_se().into(),
                p.relative_error.into(),
                p.exact_forward.into(),
                p.estimate.forward_term.into(),
                p.exact_reverse.into(),
                p.estimate.reverse_term.into(),
                p.sign_match.into(),
                p.gap_retain.into(),
                p.gap_unlearned.into(),
                p.decoder_term.into(),
            ]);
        }
        t
    }
}

/// Parse `--timesteps`: a count spread uniformly over `2..=steps`, or an
/// explicit comma-separated list.
pub fn parse_timesteps(spec: &str, steps: usize) -> Result<Vec<usize>> {
    let bad = |msg: String| CliError::Validation(format!("--timesteps: {msg}"));
    let values: Vec<usize> = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}"))))
        .collect::<Result<_>>()?;
    let ts = if values.len() == 1 {
        let count = values[0];
        if count == 0 || count > steps - 1 {
            return Err(bad(format!("count must lie in 1..={}", steps - 1)));
        }
        if count == 1 {
            vec![steps]
        } else {
            let span = (steps - 2) as f64;
            let mut ts: Vec<usize> = (0..count)
                .map(|k| 2 + (k as f64 * span / (count - 1) as f64).round() as usize)
                .collect();
            ts.dedup();
            ts
        }
    } else {
        values
    };
    if let Some(t) = ts.iter().find(|&&t| t < 2 || t > steps) {
        return Err(bad(format!("timestep {t} is outside 2..={steps}")));
    }
    Ok(ts)
}

fn random_cov<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.2
}

fn random_pair<R: Rng>(
    config: &GaussianConfig,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<(usize, AffineDenoiser, AffineDenoiser)> {
    let d = rng.random_range(1..=config.max_dim);
    let mu_r = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov_r = random_cov(d, rng);
    let direction = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let magnitude = config.mean_shift * rng.random_range(0.5..1.5);
    let mu_u = &mu_r + direction.normalize() * magnitude;
    let s = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let b = DMatrix::identity(d, d) + (&s + s.transpose()) * (0.5 * config.cov_shift);
    let mut cov_u = &b * &cov_r * b.transpose();
    cov_u = (&cov_u + cov_u.transpose()) * 0.5;
    Ok((
        d,
        optimal_denoiser(&mu_r, &cov_r, schedule)?,
        optimal_denoiser(&mu_u, &cov_u, schedule)?,
    ))
}

fn mean_gap(
    den: &AffineDenoiser,
    schedule: &NoiseSchedule,
    marginal: &GaussianMarginal,
    xs: &[DVector<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for x in xs {
        total += negative_elbo(den, schedule, x)?.total() + marginal.log_density(x)?;
    }
    Ok(total / xs.len() as f64)
}

fn mean_decoder_difference(
    own: &AffineDenoiser,
    other: &AffineDenoiser,
    schedule: &NoiseSchedule,
    xs: &[DVector<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for x in xs {
        total += negative_elbo(other, schedule, x)?.decoder - negative_elbo(own, schedule, x)?.decoder;
    }
    Ok(total / xs.len() as f64)
}

pub fn run_linear_gaussian(config: &GaussianConfig, timesteps: Option<Vec<usize>>, seed: u64) -> Result<GaussianRun> {
    let schedule = build_schedule(
        config.steps,
        BetaSpec::Linear {
            start: config.beta_start,
            end: config.beta_end,
        },
    )?;
    let timesteps = timesteps.unwrap_or_else(|| fade_core::diffusion::default_timesteps(config.steps));
    let seeds = SeedStream::new(seed);
    let mut pairs = Vec::with_capacity(config.pairs);
    for index in 0..config.pairs {
        let pair_seeds = seeds.child(index as u64);
        let (dim, retain, unlearned) = random_pair(config, &schedule, &mut pair_seeds.rng(0))?;
        let m_r = generative_marginal(&retain, &schedule)?;
        let m_u = generative_marginal(&unlearned, &schedule)?;
        let xr = m_r.sample(config.samples, &mut pair_seeds.rng(1))?;
        let xu = m_u.sample(config.samples, &mut pair_seeds.rng(2))?;
        let options = DiffusionFadeOptions {
            timesteps: Some(timesteps.clone()),
            noise_seed: pair_seeds.child(3).root(),
            draws: config.draws,
        };
        let (estimate, _) = fade_diffusion(&retain, &unlearned, &xr, &xu, &schedule, &options)?;
        let exact_forward = gaussian_kl(&m_r, &m_u)?;
        let exact_reverse = gaussian_kl(&m_u, &m_r)?;
        let exact_jeffreys = exact_forward + exact_reverse;
        let k = GAP_SAMPLES.min(config.samples);
        pairs.push(PairResult {
            index,
            dim,
            exact_forward,
            exact_reverse,
            exact_jeffreys,
            relative_error: (estimate.fade - exact_jeffreys).abs() / exact_jeffreys,
            sign_match: estimate.forward_term > 0.0 && estimate.reverse_term > 0.0,
            estimate,
            gap_retain: mean_gap(&retain, &schedule, &m_r, &xr[..k])?,
            gap_unlearned: mean_gap(&unlearned, &schedule, &m_u, &xu[..k])?,
            decoder_term: mean_decoder_difference(&retain, &unlearned, &schedule, &xr[..k])?
                + mean_decoder_difference(&unlearned, &retain, &schedule, &xu[..k])?,
        });
    }
    Ok(GaussianRun {
        timesteps,
        pairs,
        tolerance: config.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestep_specs() {
        assert_eq!(parse_timesteps("3", 10).unwrap(), vec![2, 6, 10]);
        assert_eq!(parse_timesteps("2,5, 7", 10).unwrap(), vec![2, 5, 7]);
        assert_eq!(parse_timesteps("9", 10).unwrap(), (2..=10).collect::<Vec<_>>());
        assert!(parse_timesteps("10", 10).is_err());
        assert!(parse_timesteps("1,4", 10).is_err());
        assert!(parse_timesteps("x", 10).is_err());
    }
}
