//! A small synthetic question-answering world with fictitious profiles.
//!
//! Token layout (ids): `0` EOS, `1` question word, `2` paraphrase marker,
//! `3` answer closer, then one token per relation, then entity tokens.
//!
//! ```text
//! question    [QW, s1, s2, rel, EOS]
//! answer      [e1, e2, CLOSE, EOS]
//! paraphrase  [PARA, e2, e1, EOS]
//! perturbed   [e1', e2', CLOSE, EOS]      (entity swaps)
//! ```

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tabular::{LmError, QAItem, SplitSpec, Token, Vocab};
use crate::seed::SeedStream;

const EOS: Token = 0;
const QUESTION_WORD: Token = 1;
const PARAPHRASE_MARK: Token = 2;
const CLOSE: Token = 3;
const FIRST_RELATION: Token = 4;
const MIN_ENTITIES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TofuWorldConfig {
    pub n_profiles: usize,
    pub qa_per_profile: usize,
    pub vocab_size: usize,
    pub forget_fraction: f64,
    pub n_perturbed: usize,
}

impl Default for TofuWorldConfig {
    fn default() -> Self {
        Self {
            n_profiles: 100,
            qa_per_profile: 20,
            vocab_size: 64,
            forget_fraction: 0.01,
            n_perturbed: 3,
        }
    }
}

/// The generated world: every item in profile order plus the split.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTofu {
    pub vocab: Vocab,
    pub items: Vec<QAItem>,
    pub split: SplitSpec,
}

impl SyntheticTofu {
    /// Training corpus for one training seed: every item once, plus a
    /// duplicate of each item with probability `jitter`. Duplication is
    /// decided per item id, so two corpora built with the same seed agree on
    /// every item they share.
    pub fn training_corpus(&self, items: &[QAItem], seed: u64, jitter: f64) -> Vec<QAItem> {
        let seeds = SeedStream::new(seed);
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            out.push(item.clone());
            if seeds.rng(fnv1a(&item.id)).random::<f64>() < jitter {
                out.push(item.clone());
            }
        }
        out
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn relation_count(vocab_size: usize, qa_per_profile: usize) -> usize {
    qa_per_profile
        .min((vocab_size.saturating_sub(FIRST_RELATION as usize)) / 3)
        .max(1)
}

/// Build a deterministic synthetic world from `rng`.
pub fn make_synthetic_tofu<R: Rng + ?Sized>(rng: &mut R, config: &TofuWorldConfig) -> Result<SyntheticTofu, LmError> {
    let TofuWorldConfig {
        n_profiles,
        qa_per_profile,
        vocab_size,
        forget_fraction,
        n_perturbed,
    } = *config;
    if n_profiles == 0 || qa_per_profile == 0 || n_perturbed == 0 {
        return Err(LmError::InvalidArgument("world sizes must be at least 1".into()));
    }
    if !(forget_fraction > 0.0 && forget_fraction < 1.0) {
        return Err(LmError::InvalidArgument(format!(
            "forget_fraction must lie in (0, 1), got {forget_fraction}"
        )));
    }
    let relations = relation_count(vocab_size, qa_per_profile);
    let first_entity = FIRST_RELATION as usize + relations;
    if vocab_size < first_entity + MIN_ENTITIES {
        return Err(LmError::InvalidArgument(format!(
            "vocabulary of {vocab_size} tokens is too small for {relations} relations"
        )));
    }
    let vocab = Vocab::new(vocab_size, EOS)?;
    let entities: Vec<Token> = (first_entity..vocab_size).map(|t| t as Token).collect();
    let pick_pair = |rng: &mut R, avoid: &[Token]| -> (Token, Token) {
        let mut pool: Vec<Token> = entities.iter().copied().filter(|e| !avoid.contains(e)).collect();
        pool.shuffle(rng);
        (pool[0], pool[1])
    };

    let mut items = Vec::with_capacity(n_profiles * qa_per_profile);
    for p in 0..n_profiles {
        let s2 = entities[p % entities.len()];
        let s1 = loop {
            let c = entities[rng.random_range(0..entities.len())];
            if c != s2 {
                break c;
            }
        };
        for j in 0..qa_per_profile {
            let rel = FIRST_RELATION + (j % relations) as Token;
            let (e1, e2) = pick_pair(rng, &[]);
            let perturbed = (0..n_perturbed)
                .map(|_| {
                    let (f1, f2) = pick_pair(rng, &[e1, e2]);
                    vec![f1, f2, CLOSE, EOS]
                })
                .collect();
            items.push(QAItem {
                id: format!("p{p:03}-q{j:02}"),
                question: vec![QUESTION_WORD, s1, s2, rel, EOS],
                answer: vec![e1, e2, CLOSE, EOS],
                paraphrase: vec![PARAPHRASE_MARK, e2, e1, EOS],
                perturbed,
            });
        }
    }

    let total = items.len();
    let forget_count = ((forget_fraction * total as f64).round() as usize).clamp(1, total - 1);
    let mut profiles: Vec<usize> = (0..n_profiles).collect();
    profiles.shuffle(rng);
    let mut is_forget = vec![false; total];
    let mut chosen = 0;
    'outer: for p in profiles {
        for j in 0..qa_per_profile {
            if chosen == forget_count {
                break 'outer;
            }
            is_forget[p * qa_per_profile + j] = true;
            chosen += 1;
        }
    }
    let (forget, retain): (Vec<_>, Vec<_>) = items.iter().cloned().zip(&is_forget).partition(|(_, &f)| f);
    let split = SplitSpec::new(
        retain.into_iter().map(|(i, _)| i).collect(),
        forget.into_iter().map(|(i, _)| i).collect(),
    )?;
    Ok(SyntheticTofu { vocab, items, split })
}
