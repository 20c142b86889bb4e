#![allow(dead_code)]

use fade_core::lm::{TabularLM, Token, Vocab};
use fade_core::{LikelihoodRecord, ModelTag};
use rand::Rng;

pub const BERNOULLI_P: [f64; 2] = [0.5, 0.5];
pub const BERNOULLI_Q: [f64; 2] = [0.25, 0.75];
pub const BERNOULLI_JEFFREYS: f64 = 0.274653;

/// Paired records for categorical outcomes drawn `n` times from each side.
pub fn categorical_records<R: Rng>(p: &[f64], q: &[f64], n: usize, rng: &mut R) -> Vec<LikelihoodRecord> {
    let draw = |dist: &[f64], rng: &mut R| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in dist.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        dist.len() - 1
    };
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        for (origin, dist) in [(ModelTag::Retain, p), (ModelTag::Unlearned, q)] {
            let x = draw(dist, rng);
            out.push(LikelihoodRecord::new(
                "p0",
                format!("{}{i}", origin.as_str()),
                origin,
                p[x].ln(),
                q[x].ln(),
            ));
        }
    }
    out
}

/// A strictly positive random distribution over `k` outcomes.
pub fn random_distribution<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Random order-0 or order-1 model with every context row populated.
pub fn random_model<R: Rng>(vocab: Vocab, order: usize, rng: &mut R) -> TabularLM {
    let mut rows = vec![(Vec::new(), random_distribution(vocab.size, rng))];
    if order == 1 {
        for tok in 0..vocab.size as Token {
            rows.push((vec![tok], random_distribution(vocab.size, rng)));
        }
    }
    TabularLM::from_rows(vocab, order, rows).unwrap()
}
