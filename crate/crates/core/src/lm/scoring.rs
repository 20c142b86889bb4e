use super::tabular::{LmError, TabularLM, Token};
use crate::record::{LikelihoodRecord, ModelTag};
use crate::seed::SeedStream;

/// Paired records for one prompt plus the number of samples cut at the
/// length guard before emitting EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrompt {
    pub records: Vec<LikelihoodRecord>,
    pub truncated: usize,
}

/// Draw `n` continuations of `prompt` from each model and score every one of
/// them under both models.
///
/// Retain-generated sample `i` uses stream `2i` of `seeds`, unlearned sample
/// `i` uses stream `2i + 1`. Samples cut at `max_len` are scored as prefix
/// events, which matches the horizon-truncated outcome space.
pub fn sample_and_score(
    retain: &TabularLM,
    unlearned: &TabularLM,
    prompt_id: &str,
    prompt: &[Token],
    n: usize,
    max_len: usize,
    seeds: SeedStream,
) -> Result<ScoredPrompt, LmError> {
    if retain.vocab() != unlearned.vocab() {
        return Err(LmError::InvalidModel("models use different vocabularies".into()));
    }
    if n == 0 || max_len == 0 {
        return Err(LmError::InvalidArgument(
            "sample count and max_len must be at least 1".into(),
        ));
    }
    retain.vocab().check(prompt)?;
    let eos = retain.eos();
    let mut records = Vec::with_capacity(2 * n);
    let mut truncated = 0;
    for i in 0..n {
        for (offset, origin, model) in [(0, ModelTag::Retain, retain), (1, ModelTag::Unlearned, unlearned)] {
            let mut rng = seeds.rng(2 * i as u64 + offset);
            let x = model.sample(prompt, max_len, &mut rng);
            if x.last() != Some(&eos) {
                truncated += 1;
            }
            let mut rec = LikelihoodRecord::new(
                prompt_id,
                format!("{}{i}", &origin.as_str()[..1]),
                origin,
                retain.log_prob_prefix(prompt, &x)?,
                unlearned.log_prob_prefix(prompt, &x)?,
            );
            rec.length = Some(x.len() as u64);
            records.push(rec);
        }
    }
    Ok(ScoredPrompt { records, truncated })
}
