//! Monte Carlo FADE estimation from paired log-likelihood records, and the
//! exact Jeffreys-divergence oracles used to validate it.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{TabularLM, Token};
use crate::record::{LikelihoodRecord, ModelTag};
use crate::seed::SeedStream;

/// Upper bound on the number of outcome sequences the autoregressive oracle
/// will enumerate.
pub const MAX_ENUMERATED_SEQUENCES: u64 = 2_000_000;

const DISTRIBUTION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("prompt `{prompt_id}` has no samples generated by the {missing} model")]
    MissingDirection { prompt_id: String, missing: ModelTag },
    #[error("non-finite log-likelihood in record `{sample_id}` of prompt `{prompt_id}`")]
    NonFiniteLikelihood { prompt_id: String, sample_id: String },
    #[error("records for one estimate span several prompts (`{first}` and `{other}`)")]
    MixedPrompts { first: String, other: String },
    #[error("no records")]
    EmptyDataset,
    #[error("in prompt `{prompt_id}`: {source}")]
    InPrompt {
        prompt_id: String,
        #[source]
        source: Box<DivergenceError>,
    },
    #[error("distributions put mass on disjoint outcomes (index {index})")]
    DisjointSupport { index: usize },
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("distributions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("models use different vocabularies ({0} vs {1} tokens)")]
    VocabMismatch(usize, usize),
    #[error("enumeration would visit {0} sequences (limit {MAX_ENUMERATED_SEQUENCES})")]
    EnumerationTooLarge(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Forward and reverse expected log-likelihood gaps for one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadeEstimate {
    /// Mean of `logp_retain - logp_unlearned` over retain-generated samples.
    pub forward_term: f64,
    /// Mean of `logp_unlearned - logp_retain` over unlearned-generated samples.
    pub reverse_term: f64,
    pub fade: f64,
    pub n_forward: usize,
    pub n_reverse: usize,
    pub se_forward: f64,
    pub se_reverse: f64,
}

impl FadeEstimate {
    /// Build an estimate from per-sample signed log-ratios of each direction.
    ///
    /// The absolute value is taken of each direction's mean, not of
    /// individual samples.
    pub fn from_log_ratios(forward: &[f64], reverse: &[f64]) -> Self {
        let (forward_term, se_forward) = mean_and_se(forward);
        let (reverse_term, se_reverse) = mean_and_se(reverse);
        Self {
            forward_term,
            reverse_term,
            fade: forward_term.abs() + reverse_term.abs(),
            n_forward: forward.len(),
            n_reverse: reverse.len(),
            se_forward,
            se_reverse,
        }
    }

    /// `se_forward + se_reverse`; the tolerance unit used when comparing
    /// against exact values.
    pub fn combined_se(&self) -> f64 {
        self.se_forward + self.se_reverse
    }
}

/// Sample mean and standard error (sample standard deviation over sqrt(n)).
/// A single observation has standard error 0.
fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    // Welford, in input order so the result is reproducible bit for bit.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    if n < 2 {
        return (mean, 0.0);
    }
    let var = m2 / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-prompt estimate plus the dataset-level aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFade {
    pub per_prompt: Vec<(String, FadeEstimate)>,
    /// Unweighted mean of the per-prompt FADE values.
    pub aggregate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
}

/// Split one prompt's records into forward and reverse signed log-ratios.
fn split_log_ratios(records: &[LikelihoodRecord]) -> Result<(Vec<f64>, Vec<f64>), DivergenceError> {
    let first = records.first().ok_or(DivergenceError::EmptyDataset)?;
    let mut forward = Vec::new();
    let mut reverse = Vec::new();
    for r in records {
        if r.prompt_id != first.prompt_id {
            return Err(DivergenceError::MixedPrompts {
                first: first.prompt_id.clone(),
                other: r.prompt_id.clone(),
            });
        }
        if !r.logp_retain.is_finite() || !r.logp_unlearned.is_finite() {
            return Err(DivergenceError::NonFiniteLikelihood {
                prompt_id: r.prompt_id.clone(),
                sample_id: r.sample_id.clone(),
            });
        }
        match r.origin {
            ModelTag::Retain => forward.push(r.own_log_ratio()),
            ModelTag::Unlearned => reverse.push(r.own_log_ratio()),
        }
    }
    for (values, tag) in [(&forward, ModelTag::Retain), (&reverse, ModelTag::Unlearned)] {
        if values.is_empty() {
            return Err(DivergenceError::MissingDirection {
                prompt_id: first.prompt_id.clone(),
                missing: tag,
            });
        }
    }
    Ok((forward, reverse))
}

/// FADE for a single prompt from records generated by both models.
pub fn fade_for_prompt(records: &[LikelihoodRecord]) -> Result<FadeEstimate, DivergenceError> {
    let (forward, reverse) = split_log_ratios(records)?;
    Ok(FadeEstimate::from_log_ratios(&forward, &reverse))
}

/// FADE for every prompt group and the mean over prompts.
pub fn dataset_fade(groups: &BTreeMap<String, Vec<LikelihoodRecord>>) -> Result<DatasetFade, DivergenceError> {
    if groups.is_empty() {
        return Err(DivergenceError::EmptyDataset);
    }
    let mut per_prompt = Vec::with_capacity(groups.len());
    for (prompt_id, records) in groups {
        let est = fade_for_prompt(records).map_err(|e| DivergenceError::InPrompt {
            prompt_id: prompt_id.clone(),
            source: Box::new(e),
        })?;
        per_prompt.push((prompt_id.clone(), est));
    }
    let aggregate = per_prompt.iter().map(|(_, e)| e.fade).sum::<f64>() / per_prompt.len() as f64;
    Ok(DatasetFade {
        per_prompt,
        aggregate,
        baseline: None,
    })
}

/// Group records by prompt id, preserving input order within each group.
pub fn group_by_prompt(records: impl IntoIterator<Item = LikelihoodRecord>) -> BTreeMap<String, Vec<LikelihoodRecord>> {
    let mut groups: BTreeMap<String, Vec<LikelihoodRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.prompt_id.clone()).or_default().push(r);
    }
    groups
}

/// Seed-baseline FADE: the mean dataset aggregate over retain-vs-retain
/// seed pairs.
pub fn baseline_fade(seed_pairs: &[BTreeMap<String, Vec<LikelihoodRecord>>]) -> Result<f64, DivergenceError> {
    if seed_pairs.is_empty() {
        return Err(DivergenceError::EmptyDataset);
    }
    let mut total = 0.0;
    for pair in seed_pairs {
        total += dataset_fade(pair)?.aggregate;
    }
    Ok(total / seed_pairs.len() as f64)
}

/// Percentile bootstrap interval for one prompt's FADE.
///
/// Each resample draws the forward and reverse samples independently with
/// replacement, keeping the per-direction sample counts fixed.
pub fn bootstrap_ci(
    records: &[LikelihoodRecord],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<(f64, f64), DivergenceError> {
    check_bootstrap_args(resamples, confidence)?;
    let (forward, reverse) = split_log_ratios(records)?;
    let mut rng = SeedStream::new(seed).rng(0);
    let mut fades = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let f = resampled_mean(&forward, &mut rng);
        let r = resampled_mean(&reverse, &mut rng);
        fades.push(f.abs() + r.abs());
    }
    fades.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    Ok((quantile_sorted(&fades, tail), quantile_sorted(&fades, 1.0 - tail)))
}

/// Percentile bootstrap interval for the dataset aggregate. Every resample
/// redraws each prompt's two directions as in [`bootstrap_ci`] and averages
/// the per-prompt values.
pub fn bootstrap_dataset_ci(
    groups: &BTreeMap<String, Vec<LikelihoodRecord>>,
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<(f64, f64), DivergenceError> {
    check_bootstrap_args(resamples, confidence)?;
    if groups.is_empty() {
        return Err(DivergenceError::EmptyDataset);
    }
    let mut split = Vec::with_capacity(groups.len());
    for (prompt_id, records) in groups {
        split.push(split_log_ratios(records).map_err(|e| DivergenceError::InPrompt {
            prompt_id: prompt_id.clone(),
            source: Box::new(e),
        })?);
    }
    let mut rng = SeedStream::new(seed).rng(0);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut total = 0.0;
        for (forward, reverse) in &split {
            total += resampled_mean(forward, &mut rng).abs() + resampled_mean(reverse, &mut rng).abs();
        }
        means.push(total / split.len() as f64);
    }
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    Ok((quantile_sorted(&means, tail), quantile_sorted(&means, 1.0 - tail)))
}

fn check_bootstrap_args(resamples: usize, confidence: f64) -> Result<(), DivergenceError> {
    if resamples < 100 {
        return Err(DivergenceError::InvalidArgument(format!(
            "bootstrap needs at least 100 resamples, got {resamples}"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(DivergenceError::InvalidArgument(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    Ok(())
}

fn resampled_mean<R: Rng>(values: &[f64], rng: &mut R) -> f64 {
    let n = values.len();
    let mut sum = 0.0;
    for _ in 0..n {
        sum += values[rng.random_range(0..n)];
    }
    sum / n as f64
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn check_distribution(p: &[f64], name: &str) -> Result<(), DivergenceError> {
    if let Some(i) = p.iter().position(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(DivergenceError::NotADistribution(format!(
            "{name}[{i}] = {} is not a non-negative finite number",
            p[i]
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(DivergenceError::NotADistribution(format!("{name} sums to {total}")));
    }
    Ok(())
}

/// Exact Jeffreys divergence `KL(p||q) + KL(q||p) = sum (p_i - q_i) ln(p_i / q_i)`
/// in nats.
pub fn exact_jeffreys_categorical(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch(p.len(), q.len()));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let mut total = 0.0;
    for (i, (&a, &b)) in p.iter().zip(q).enumerate() {
        match (a > 0.0, b > 0.0) {
            (true, true) => total += (a - b) * (a.ln() - b.ln()),
            (false, false) => {}
            _ => return Err(DivergenceError::DisjointSupport { index: i }),
        }
    }
    Ok(total)
}

/// Number of outcome sequences of the horizon-truncated sequence space:
/// every EOS-terminated sequence shorter than or equal to `horizon`, plus
/// every EOS-free sequence of exactly `horizon` tokens.
fn outcome_count(vocab: usize, horizon: usize) -> u64 {
    let branching = (vocab - 1) as u64;
    let mut level = 1u64;
    let mut total = 0u64;
    for _ in 0..horizon {
        total = total.saturating_add(level);
        level = level.saturating_mul(branching);
    }
    total.saturating_add(level)
}

/// Exact Jeffreys divergence between two models' continuation distributions
/// after `prompt`, over sequences that end at EOS or are cut at `horizon`
/// tokens. The truncated outcome space is a proper distribution for both
/// models, so no renormalisation is needed.
pub fn exact_jeffreys_autoregressive(
    model_a: &TabularLM,
    model_b: &TabularLM,
    prompt: &[Token],
    horizon: usize,
) -> Result<f64, DivergenceError> {
    if model_a.vocab_size() != model_b.vocab_size() || model_a.eos() != model_b.eos() {
        return Err(DivergenceError::VocabMismatch(
            model_a.vocab_size(),
            model_b.vocab_size(),
        ));
    }
    if horizon == 0 {
        return Err(DivergenceError::InvalidArgument("horizon must be at least 1".into()));
    }
    let count = outcome_count(model_a.vocab_size(), horizon);
    if count > MAX_ENUMERATED_SEQUENCES {
        return Err(DivergenceError::EnumerationTooLarge(count));
    }
    let mut walker = Enumerator {
        a: model_a,
        b: model_b,
        horizon,
        context: prompt.to_vec(),
        prompt_len: prompt.len(),
        total: 0.0,
        outcomes: 0,
    };
    walker.visit(0.0, 0.0)?;
    Ok(walker.total)
}

struct Enumerator<'a> {
    a: &'a TabularLM,
    b: &'a TabularLM,
    horizon: usize,
    context: Vec<Token>,
    prompt_len: usize,
    total: f64,
    outcomes: usize,
}

impl Enumerator<'_> {
    fn leaf(&mut self, la: f64, lb: f64) -> Result<(), DivergenceError> {
        let idx = self.outcomes;
        self.outcomes += 1;
        match (la > f64::NEG_INFINITY, lb > f64::NEG_INFINITY) {
            (true, true) => self.total += (la.exp() - lb.exp()) * (la - lb),
            (false, false) => {}
            _ => return Err(DivergenceError::DisjointSupport { index: idx }),
        }
        Ok(())
    }

    fn visit(&mut self, la: f64, lb: f64) -> Result<(), DivergenceError> {
        let depth = self.context.len() - self.prompt_len;
        let pa = self.a.next_distribution(&self.context).to_vec();
        let pb = self.b.next_distribution(&self.context).to_vec();
        let eos = self.a.eos();
        for tok in 0..self.a.vocab_size() {
            let na = la + pa[tok].ln();
            let nb = lb + pb[tok].ln();
            if tok == eos as usize || depth + 1 == self.horizon {
                self.leaf(na, nb)?;
            } else if na > f64::NEG_INFINITY || nb > f64::NEG_INFINITY {
                self.context.push(tok as Token);
                self.visit(na, nb)?;
                self.context.pop();
            }
        }
        Ok(())
    }
}
