//! Length-normalised truth ratio: the mean per-token-normalised likelihood
//! of perturbed answers over that of a reference answer.

use super::tabular::{LmError, QAItem, TabularLM, Token};
use crate::LOGP_FLOOR;

/// Truth ratio of `item` with its paraphrase as the reference answer.
pub fn truth_ratio(model: &TabularLM, item: &QAItem) -> Result<f64, LmError> {
    item.validate(&model.vocab())?;
    truth_ratio_against(model, &item.question, &item.paraphrase, &item.perturbed)
}

/// Truth ratio with an explicit reference answer, e.g. the original answer
/// instead of the paraphrase.
pub fn truth_ratio_against(
    model: &TabularLM,
    question: &[Token],
    reference: &[Token],
    perturbed: &[Vec<Token>],
) -> Result<f64, LmError> {
    if perturbed.is_empty() {
        return Err(LmError::InvalidArgument("perturbed answer set is empty".into()));
    }
    let reference_logp = model.logp(question, reference)?;
    if reference_logp <= LOGP_FLOOR || has_zero_transition(model, question, reference) {
        return Err(LmError::DegenerateDenominator);
    }
    let denom = reference_logp / reference.len() as f64;
    let mut normalized = Vec::with_capacity(perturbed.len());
    for answer in perturbed {
        normalized.push(model.logp(question, answer)? / answer.len() as f64);
    }
    Ok((log_mean_exp(&normalized) - denom).exp())
}

fn has_zero_transition(model: &TabularLM, context: &[Token], continuation: &[Token]) -> bool {
    let mut history = context.to_vec();
    for &tok in continuation {
        if model.next_distribution(&history)[tok as usize] <= 0.0 {
            return true;
        }
        history.push(tok);
    }
    false
}

fn log_mean_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + (sum / xs.len() as f64).ln()
}
