//! Fixtures shared by the benchmarks.

use fade_core::diffusion::{build_schedule, optimal_denoiser, AffineDenoiser, BetaSpec, NoiseSchedule};
use fade_core::lm::{TabularLM, Token, Vocab};
use fade_core::{LikelihoodRecord, ModelTag, SeedStream};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `n` records per direction for one prompt with random log-likelihoods.
pub fn records(n: usize, seed: u64) -> Vec<LikelihoodRecord> {
    let mut rng = SeedStream::new(seed).rng(0);
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        for origin in [ModelTag::Retain, ModelTag::Unlearned] {
            out.push(LikelihoodRecord::new(
                "p",
                format!("{}{i}", origin.as_str()),
                origin,
                -rng.random_range(0.0..40.0),
                -rng.random_range(0.0..40.0),
            ));
        }
    }
    out
}

pub fn samples(n: usize, shift: f64, seed: u64) -> Vec<f64> {
    let mut rng = SeedStream::new(seed).rng(0);
    (0..n).map(|_| rng.random::<f64>() + shift).collect()
}

fn distribution<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Order-1 model with every row populated.
pub fn model(vocab_size: usize, seed: u64) -> TabularLM {
    let mut rng = SeedStream::new(seed).rng(0);
    let vocab = Vocab::new(vocab_size, 0).expect("valid vocabulary");
    let mut rows = vec![(Vec::new(), distribution(vocab_size, &mut rng))];
    for tok in 0..vocab_size as Token {
        rows.push((vec![tok], distribution(vocab_size, &mut rng)));
    }
    TabularLM::from_rows(vocab, 1, rows).expect("rows are distributions")
}

/// Two optimal denoisers for Gaussians differing in mean and scale.
pub fn denoiser_pair(dim: usize, steps: usize) -> (NoiseSchedule, AffineDenoiser, AffineDenoiser) {
    let schedule = build_schedule(steps, BetaSpec::Linear { start: 1e-3, end: 0.2 }).expect("valid schedule");
    let mean = DVector::from_element(dim, 0.5);
    let cov = DMatrix::identity(dim, dim);
    let a = optimal_denoiser(&mean, &cov, &schedule).expect("psd");
    let b = optimal_denoiser(&(&mean * 2.0), &(&cov * 1.5), &schedule).expect("psd");
    (schedule, a, b)
}
