use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which of the two compared models generated a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Retain,
    Unlearned,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Retain => "retain",
            ModelTag::Unlearned => "unlearned",
        }
    }

    pub fn other(self) -> ModelTag {
        match self {
            ModelTag::Retain => ModelTag::Unlearned,
            ModelTag::Unlearned => ModelTag::Retain,
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "retain" => Ok(ModelTag::Retain),
            "unlearned" => Ok(ModelTag::Unlearned),
            other => Err(format!("unknown origin `{other}` (expected `retain` or `unlearned`)")),
        }
    }
}

/// One generated sample scored under both models. Log-likelihoods are in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRecord {
    pub prompt_id: String,
    pub sample_id: String,
    pub origin: ModelTag,
    pub logp_retain: f64,
    pub logp_unlearned: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<u64>,
}

impl LikelihoodRecord {
    pub fn new(
        prompt_id: impl Into<String>,
        sample_id: impl Into<String>,
        origin: ModelTag,
        logp_retain: f64,
        logp_unlearned: f64,
    ) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            sample_id: sample_id.into(),
            origin,
            logp_retain,
            logp_unlearned,
            length: None,
        }
    }

    /// Log-ratio of the generating model over the other model.
    pub fn own_log_ratio(&self) -> f64 {
        match self.origin {
            ModelTag::Retain => self.logp_retain - self.logp_unlearned,
            ModelTag::Unlearned => self.logp_unlearned - self.logp_retain,
        }
    }

    /// The same record with the two models' roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            origin: self.origin.other(),
            logp_retain: self.logp_unlearned,
            logp_unlearned: self.logp_retain,
            ..self.clone()
        }
    }
}
