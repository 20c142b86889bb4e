use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::LOGP_FLOOR;

pub type Token = u32;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("token {token} is outside the vocabulary of {vocab} tokens")]
    UnknownToken { token: Token, vocab: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("continuation is not terminated by EOS")]
    MissingEos,
    #[error("paraphrase has zero probability under the model")]
    DegenerateDenominator,
    #[error("invalid QA item `{id}`: {reason}")]
    InvalidItem { id: String, reason: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Token ids `0..size`, one of which is the end-of-sequence marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub size: usize,
    pub eos: Token,
}

impl Vocab {
    pub fn new(size: usize, eos: Token) -> Result<Self, LmError> {
        if size < 2 || eos as usize >= size {
            return Err(LmError::InvalidModel(format!(
                "vocabulary of {size} tokens cannot hold EOS id {eos}"
            )));
        }
        Ok(Self { size, eos })
    }

    pub fn check(&self, tokens: &[Token]) -> Result<(), LmError> {
        match tokens.iter().find(|&&t| t as usize >= self.size) {
            Some(&token) => Err(LmError::UnknownToken {
                token,
                vocab: self.size,
            }),
            None => Ok(()),
        }
    }
}

/// A question with its correct answer, a paraphrase of that answer, and
/// perturbed (incorrect) answers. Every sequence ends with EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: Vec<Token>,
    pub answer: Vec<Token>,
    pub paraphrase: Vec<Token>,
    pub perturbed: Vec<Vec<Token>>,
}

impl QAItem {
    pub fn validate(&self, vocab: &Vocab) -> Result<(), LmError> {
        let fail = |reason: String| LmError::InvalidItem {
            id: self.id.clone(),
            reason,
        };
        if self.perturbed.is_empty() {
            return Err(fail("perturbed answer set is empty".into()));
        }
        let named = [
            ("question", &self.question),
            ("answer", &self.answer),
            ("paraphrase", &self.paraphrase),
        ];
        let perturbed = self.perturbed.iter().map(|p| ("perturbed answer", p));
        for (name, seq) in named.into_iter().chain(perturbed) {
            if seq.last() != Some(&vocab.eos) {
                return Err(fail(format!("{name} is empty or not EOS-terminated")));
            }
            vocab.check(seq)?;
        }
        Ok(())
    }

    /// The training stream `question ‖ answer`.
    pub fn stream(&self) -> impl Iterator<Item = Token> + '_ {
        self.question.iter().chain(&self.answer).copied()
    }
}

/// Retain and forget partitions of a QA corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub retain_items: Vec<QAItem>,
    pub forget_items: Vec<QAItem>,
}

impl SplitSpec {
    pub fn new(retain_items: Vec<QAItem>, forget_items: Vec<QAItem>) -> Result<Self, LmError> {
        let retain_ids: BTreeSet<&str> = retain_items.iter().map(|i| i.id.as_str()).collect();
        if let Some(shared) = forget_items.iter().find(|i| retain_ids.contains(i.id.as_str())) {
            return Err(LmError::InvalidItem {
                id: shared.id.clone(),
                reason: "item appears in both the retain and forget splits".into(),
            });
        }
        Ok(Self {
            retain_items,
            forget_items,
        })
    }

    pub fn all_items(&self) -> impl Iterator<Item = &QAItem> {
        self.retain_items.iter().chain(&self.forget_items)
    }
}

/// Order-`k` autoregressive categorical model.
///
/// The next-token distribution depends on the trailing `min(k, n)` tokens of
/// the `n` tokens seen so far; contexts without a stored row are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct TabularLM {
    vocab: Vocab,
    order: usize,
    smoothing: f64,
    table: BTreeMap<Vec<Token>, Vec<f64>>,
    uniform: Vec<f64>,
}

impl TabularLM {
    /// Build a model from explicit rows. Each row must be a distribution.
    pub fn from_rows(
        vocab: Vocab,
        order: usize,
        rows: impl IntoIterator<Item = (Vec<Token>, Vec<f64>)>,
    ) -> Result<Self, LmError> {
        let mut table = BTreeMap::new();
        for (ctx, row) in rows {
            if ctx.len() > order {
                return Err(LmError::InvalidModel(format!(
                    "context {ctx:?} is longer than the model order {order}"
                )));
            }
            vocab.check(&ctx)?;
            check_row(&ctx, &row, vocab.size)?;
            table.insert(ctx, row);
        }
        Ok(Self {
            vocab,
            order,
            smoothing: 0.0,
            table,
            uniform: vec![1.0 / vocab.size as f64; vocab.size],
        })
    }

    /// Additively smoothed transition counts over every `question ‖ answer`
    /// stream of the corpus.
    pub fn train(corpus: &[QAItem], vocab: Vocab, order: usize, smoothing: f64) -> Result<Self, LmError> {
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(LmError::InvalidArgument(format!(
                "smoothing must be a non-negative number, got {smoothing}"
            )));
        }
        let mut counts: BTreeMap<Vec<Token>, Vec<u64>> = BTreeMap::new();
        let mut stream = Vec::new();
        for item in corpus {
            stream.clear();
            stream.extend(item.stream());
            vocab.check(&stream)?;
            for i in 0..stream.len() {
                let ctx = &stream[i.saturating_sub(order)..i];
                counts.entry(ctx.to_vec()).or_insert_with(|| vec![0; vocab.size])[stream[i] as usize] += 1;
            }
        }
        let table = counts
            .into_iter()
            .map(|(ctx, row)| {
                let total: u64 = row.iter().sum();
                let denom = total as f64 + smoothing * vocab.size as f64;
                let probs = row.iter().map(|&c| (c as f64 + smoothing) / denom).collect();
                (ctx, probs)
            })
            .collect();
        Ok(Self {
            vocab,
            order,
            smoothing,
            table,
            uniform: vec![1.0 / vocab.size as f64; vocab.size],
        })
    }

    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.size
    }

    pub fn eos(&self) -> Token {
        self.vocab.eos
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[Token], &[f64])> {
        self.table.iter().map(|(c, r)| (c.as_slice(), r.as_slice()))
    }

    /// The lookup key for a history: its trailing `min(order, len)` tokens.
    pub fn context_key<'a>(&self, history: &'a [Token]) -> &'a [Token] {
        &history[history.len().saturating_sub(self.order)..]
    }

    pub fn next_distribution(&self, history: &[Token]) -> &[f64] {
        self.table
            .get(self.context_key(history))
            .map(Vec::as_slice)
            .unwrap_or(&self.uniform)
    }

    pub(crate) fn row_mut(&mut self, key: &[Token]) -> &mut Vec<f64> {
        let uniform = &self.uniform;
        self.table.entry(key.to_vec()).or_insert_with(|| uniform.clone())
    }

    /// Log-probability of `continuation` after `context` without requiring
    /// EOS termination, i.e. the probability of the prefix event.
    pub fn log_prob_prefix(&self, context: &[Token], continuation: &[Token]) -> Result<f64, LmError> {
        self.vocab.check(context)?;
        self.vocab.check(continuation)?;
        let mut history = Vec::with_capacity(context.len() + continuation.len());
        history.extend_from_slice(context);
        let mut total = 0.0;
        for &tok in continuation {
            let p = self.next_distribution(&history)[tok as usize];
            total += floored_ln(p);
            history.push(tok);
        }
        Ok(total)
    }

    /// Total log-likelihood (nats) of an EOS-terminated continuation.
    pub fn logp(&self, context: &[Token], continuation: &[Token]) -> Result<f64, LmError> {
        if continuation.last() != Some(&self.vocab.eos) {
            return Err(LmError::MissingEos);
        }
        self.log_prob_prefix(context, continuation)
    }

    /// Ancestral sampling at temperature 1 from the exact conditionals.
    /// Stops after EOS or after `max_len` tokens, whichever comes first.
    pub fn sample<R: Rng + ?Sized>(&self, context: &[Token], max_len: usize, rng: &mut R) -> Vec<Token> {
        let mut history = context.to_vec();
        let start = history.len();
        while history.len() - start < max_len {
            let row = self.next_distribution(&history);
            let tok = draw(row, rng.random::<f64>());
            history.push(tok);
            if tok == self.vocab.eos {
                break;
            }
        }
        history.split_off(start)
    }

    /// Re-check every stored row; used after deserialisation.
    pub fn validate(&self) -> Result<(), LmError> {
        for (ctx, row) in &self.table {
            check_row(ctx, row, self.vocab.size)?;
        }
        Ok(())
    }
}

fn floored_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(LOGP_FLOOR)
    } else {
        log::warn!("zero-probability transition; log-likelihood floored at {LOGP_FLOOR} nats");
        LOGP_FLOOR
    }
}

/// Inverse-CDF draw; `u` in `[0, 1)`.
fn draw(row: &[f64], u: f64) -> Token {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i as Token;
            }
        }
    }
    // rounding left u just above the accumulated mass
    last_positive as Token
}

fn check_row(ctx: &[Token], row: &[f64], vocab: usize) -> Result<(), LmError> {
    if row.len() != vocab {
        return Err(LmError::InvalidModel(format!(
            "row for context {ctx:?} has {} entries, expected {vocab}",
            row.len()
        )));
    }
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(LmError::InvalidModel(format!(
            "row for context {ctx:?} has a negative or non-finite entry"
        )));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(LmError::InvalidModel(format!(
            "row for context {ctx:?} sums to {total}"
        )));
    }
    Ok(())
}

pub(crate) fn normalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= total;
    }
}

/// On-disk form of a [`TabularLM`].
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    vocab_size: usize,
    eos: Token,
    order: usize,
    smoothing: f64,
    rows: Vec<ModelRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRow {
    context: Vec<Token>,
    probs: Vec<f64>,
}

impl From<TabularLM> for ModelFile {
    fn from(m: TabularLM) -> Self {
        ModelFile {
            schema_version: 1,
            vocab_size: m.vocab.size,
            eos: m.vocab.eos,
            order: m.order,
            smoothing: m.smoothing,
            rows: m
                .table
                .into_iter()
                .map(|(context, probs)| ModelRow { context, probs })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for TabularLM {
    type Error = LmError;

    fn try_from(f: ModelFile) -> Result<Self, LmError> {
        if f.schema_version != 1 {
            return Err(LmError::InvalidModel(format!(
                "unsupported model schema version {}",
                f.schema_version
            )));
        }
        let vocab = Vocab::new(f.vocab_size, f.eos)?;
        let mut model = TabularLM::from_rows(vocab, f.order, f.rows.into_iter().map(|r| (r.context, r.probs)))?;
        model.smoothing = f.smoothing;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EOS: Token = 0;

    fn vocab(n: usize) -> Vocab {
        Vocab::new(n, EOS).unwrap()
    }

    fn item(id: &str, q: &[Token], a: &[Token]) -> QAItem {
        QAItem {
            id: id.into(),
            question: q.to_vec(),
            answer: a.to_vec(),
            paraphrase: a.to_vec(),
            perturbed: vec![a.to_vec()],
        }
    }

    #[test]
    fn deterministic_corpus_learns_its_continuation() {
        let corpus = vec![item("a", &[1, 2, EOS], &[3, 4, EOS])];
        let m = TabularLM::train(&corpus, vocab(5), 2, 0.0).unwrap();
        assert_eq!(m.next_distribution(&[2, EOS])[3], 1.0);
        assert_eq!(m.logp(&[1, 2, EOS], &[3, 4, EOS]).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            assert_eq!(m.sample(&[1, 2, EOS], 10, &mut rng), vec![3, 4, EOS]);
        }
    }

    #[test]
    fn heavy_smoothing_approaches_uniform() {
        let corpus = vec![item("a", &[1, 2, EOS], &[3, 4, EOS])];
        let m = TabularLM::train(&corpus, vocab(5), 2, 1e9).unwrap();
        for p in m.next_distribution(&[2, EOS]) {
            assert!((p - 0.2).abs() < 1e-8);
        }
    }

    #[test]
    fn training_ignores_corpus_order() {
        let corpus = vec![
            item("a", &[1, 2, EOS], &[3, 4, EOS]),
            item("b", &[2, 2, EOS], &[4, 3, EOS]),
            item("c", &[1, 3, EOS], &[3, 3, EOS]),
        ];
        let mut shuffled = corpus.clone();
        shuffled.reverse();
        shuffled.swap(0, 1);
        let a = TabularLM::train(&corpus, vocab(5), 2, 0.1).unwrap();
        let b = TabularLM::train(&shuffled, vocab(5), 2, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_model_closed_form() {
        let m = TabularLM::from_rows(vocab(7), 1, []).unwrap();
        let cont = [3, 4, 5, 6, EOS];
        let expected = -5.0 * 7f64.ln();
        assert!((m.logp(&[1], &cont).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(TabularLM::train(&[], vocab(4), 1, 0.0), Err(LmError::EmptyCorpus));
        let m = TabularLM::from_rows(vocab(4), 1, []).unwrap();
        assert!(matches!(
            m.logp(&[1], &[9, EOS]),
            Err(LmError::UnknownToken { token: 9, .. })
        ));
        assert_eq!(m.logp(&[1], &[2, 3]), Err(LmError::MissingEos));
        assert!(TabularLM::from_rows(vocab(3), 1, [(vec![1], vec![0.5, 0.6, 0.0])]).is_err());
        assert!(TabularLM::from_rows(vocab(3), 1, [(vec![1, 2], vec![0.5, 0.5, 0.0])]).is_err());
    }

    #[test]
    fn zero_probability_is_floored() {
        let m = TabularLM::from_rows(vocab(3), 1, [(vec![1], vec![0.0, 1.0, 0.0])]).unwrap();
        assert_eq!(m.logp(&[1], &[EOS]).unwrap(), LOGP_FLOOR);
    }

    #[test]
    fn sampling_respects_max_len() {
        let m = TabularLM::from_rows(vocab(3), 1, [(vec![1], vec![0.0, 1.0, 0.0])]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.sample(&[1], 4, &mut rng), vec![1, 1, 1, 1]);
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let corpus = vec![item("a", &[1, 2, EOS], &[3, 4, EOS])];
        let m = TabularLM::train(&corpus, vocab(5), 2, 0.25).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: TabularLM = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        let broken = json.replacen("\"schema_version\":1", "\"schema_version\":7", 1);
        assert!(serde_json::from_str::<TabularLM>(&broken).is_err());
    }

    #[test]
    fn split_rejects_shared_items() {
        let a = item("a", &[1, EOS], &[2, EOS]);
        let b = item("b", &[1, EOS], &[3, EOS]);
        assert!(SplitSpec::new(vec![a.clone()], vec![b.clone()]).is_ok());
        assert!(SplitSpec::new(vec![a.clone(), b], vec![a]).is_err());
    }

    #[test]
    fn item_validation() {
        let v = vocab(5);
        let mut it = item("a", &[1, EOS], &[2, EOS]);
        assert!(it.validate(&v).is_ok());
        it.perturbed.clear();
        assert!(it.validate(&v).is_err());
        let mut it = item("a", &[1, EOS], &[2]);
        it.perturbed = vec![vec![2, EOS]];
        assert!(it.validate(&v).is_err());
    }
}
