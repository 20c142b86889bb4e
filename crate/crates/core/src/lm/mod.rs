//! Exact tabular autoregressive language models and the reference-based
//! evaluation built on them.

mod scoring;
mod synthetic;
mod tabular;
pub mod truth_ratio;
mod unlearn;

pub use scoring::{sample_and_score, ScoredPrompt};
pub use synthetic::{make_synthetic_tofu, SyntheticTofu, TofuWorldConfig};
pub use tabular::{LmError, QAItem, SplitSpec, TabularLM, Token, Vocab};
pub use truth_ratio::{truth_ratio, truth_ratio_against};
pub use unlearn::{unlearn_ga, unlearn_gd};
