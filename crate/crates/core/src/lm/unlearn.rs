//! Tabular analogues of gradient-ascent style unlearning.
//!
//! One epoch multiplies the probability of every distinct answer transition
//! of the forget items by `exp(-strength)` (and, for the gradient-difference
//! variant, every retain-item answer transition by `exp(+strength)`), then
//! renormalises each touched row.

use std::collections::BTreeSet;

use super::tabular::{normalize, QAItem, TabularLM, Token};

type Transition = (Vec<Token>, Token);

fn answer_transitions(model: &TabularLM, items: &[QAItem]) -> BTreeSet<Transition> {
    let mut out = BTreeSet::new();
    let mut history = Vec::new();
    for item in items {
        history.clear();
        history.extend_from_slice(&item.question);
        for &tok in &item.answer {
            out.insert((model.context_key(&history).to_vec(), tok));
            history.push(tok);
        }
    }
    out
}

fn reweight(model: &TabularLM, weighted: &[(BTreeSet<Transition>, f64)], epochs: usize) -> TabularLM {
    let mut out = model.clone();
    let rows: BTreeSet<&Vec<Token>> = weighted
        .iter()
        .flat_map(|(set, _)| set.iter().map(|(ctx, _)| ctx))
        .collect();
    for _ in 0..epochs {
        for (set, log_factor) in weighted {
            let factor = log_factor.exp();
            for (ctx, tok) in set {
                out.row_mut(ctx)[*tok as usize] *= factor;
            }
        }
        for ctx in &rows {
            normalize(out.row_mut(ctx));
        }
    }
    out
}

/// Gradient-ascent analogue on the forget answers.
pub fn unlearn_ga(model: &TabularLM, forget_items: &[QAItem], strength: f64, epochs: usize) -> TabularLM {
    let forget = answer_transitions(model, forget_items);
    reweight(model, &[(forget, -strength)], epochs)
}

/// Gradient-difference analogue: ascent on forget answers, descent on
/// retain answers.
pub fn unlearn_gd(
    model: &TabularLM,
    forget_items: &[QAItem],
    retain_items: &[QAItem],
    strength: f64,
    epochs: usize,
) -> TabularLM {
    let forget = answer_transitions(model, forget_items);
    let retain = answer_transitions(model, retain_items);
    reweight(model, &[(forget, -strength), (retain, strength)], epochs)
}
