use serde::{Deserialize, Serialize};

use super::DiffusionError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BetaSpec {
    /// `beta_t` linear in `t` from `start` (t = 1) to `end` (t = T).
    Linear {
        start: f64,
        end: f64,
    },
    Constant {
        beta: f64,
    },
}

/// Forward-process constants for timesteps `1..=T`.
///
/// `sigma2(t) = (1 - alpha_bar(t-1)) / (1 - alpha_bar(t)) * beta(t)` with
/// `alpha_bar(0) = 1`, and the MSE weight
/// `gamma(t) = beta(t)^2 / (2 sigma2(t) alpha(t) (1 - alpha_bar(t)))`
/// exists for `t >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma2: Vec<f64>,
    gamma: Vec<f64>,
}

pub fn build_schedule(steps: usize, spec: BetaSpec) -> Result<NoiseSchedule, DiffusionError> {
    if steps < 2 {
        return Err(DiffusionError::InvalidBeta(format!(
            "need at least 2 timesteps, got {steps}"
        )));
    }
    let beta: Vec<f64> = match spec {
        BetaSpec::Constant { beta } => vec![beta; steps],
        BetaSpec::Linear { start, end } => (0..steps)
            .map(|i| start + (end - start) * i as f64 / (steps - 1) as f64)
            .collect(),
    };
    NoiseSchedule::from_betas(beta)
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self, DiffusionError> {
        if beta.len() < 2 {
            return Err(DiffusionError::InvalidBeta("need at least 2 timesteps".into()));
        }
        if let Some((i, b)) = beta.iter().enumerate().find(|(_, b)| !(**b > 0.0 && **b < 1.0)) {
            return Err(DiffusionError::InvalidBeta(format!(
                "beta at t = {} is {b}, must lie in (0, 1)",
                i + 1
            )));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let mut sigma2 = Vec::with_capacity(beta.len());
        let mut gamma = Vec::with_capacity(beta.len() - 1);
        for i in 0..beta.len() {
            let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
            let s2 = (1.0 - prev) / (1.0 - alpha_bar[i]) * beta[i];
            sigma2.push(s2);
            if i > 0 {
                gamma.push(beta[i] * beta[i] / (2.0 * s2 * alpha[i] * (1.0 - alpha_bar[i])));
            }
        }
        Ok(Self {
            beta,
            alpha,
            alpha_bar,
            sigma2,
            gamma,
        })
    }

    /// Number of timesteps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    /// Posterior variance of `x_{t-1}` given `x_t, x_0`; zero at `t = 1`.
    pub fn sigma2(&self, t: usize) -> f64 {
        self.sigma2[t - 1]
    }

    /// Weight turning a noise-prediction squared error at step `t >= 2`
    /// into the matching variational-bound term.
    pub fn gamma(&self, t: usize) -> f64 {
        assert!(t >= 2, "gamma is defined for t >= 2 only");
        self.gamma[t - 2]
    }

    /// Variance of the final reverse step `p(x_0 | x_1)`. The posterior
    /// variance vanishes at `t = 1`, so the decoder uses `beta_1`.
    pub fn decoder_variance(&self) -> f64 {
        self.beta[0]
    }

    /// Variance of the reverse transition into `x_{t-1}`.
    pub fn reverse_variance(&self, t: usize) -> f64 {
        if t == 1 {
            self.decoder_variance()
        } else {
            self.sigma2(t)
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }
}
