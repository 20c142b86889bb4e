use nalgebra::{DMatrix, DVector};

use super::{DiffusionError, NoiseSchedule};

/// Per-timestep affine noise predictor `eps_hat(x, t) = W_t x + b_t`,
/// defined for every `t` in `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDenoiser {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl AffineDenoiser {
    pub fn new(weights: Vec<DMatrix<f64>>, biases: Vec<DVector<f64>>) -> Result<Self, DiffusionError> {
        let dim = biases.first().map(|b| b.len()).ok_or(DiffusionError::EmptySample)?;
        if weights.len() != biases.len() {
            return Err(DiffusionError::DimensionMismatch {
                expected: biases.len(),
                got: weights.len(),
            });
        }
        for (w, b) in weights.iter().zip(&biases) {
            if w.nrows() != dim || w.ncols() != dim || b.len() != dim {
                return Err(DiffusionError::DimensionMismatch {
                    expected: dim,
                    got: b.len().max(w.nrows()).max(w.ncols()),
                });
            }
        }
        Ok(Self { weights, biases })
    }

    pub fn dim(&self) -> usize {
        self.biases[0].len()
    }

    pub fn steps(&self) -> usize {
        self.biases.len()
    }

    pub fn predict(&self, x: &DVector<f64>, t: usize) -> DVector<f64> {
        &self.weights[t - 1] * x + &self.biases[t - 1]
    }

    /// `reference + scale * (self - reference)` applied to the weights only.
    pub fn scale_weight_offset(&self, reference: &AffineDenoiser, scale: f64) -> AffineDenoiser {
        let weights = self
            .weights
            .iter()
            .zip(&reference.weights)
            .map(|(w, r)| r + (w - r) * scale)
            .collect();
        AffineDenoiser {
            weights,
            biases: self.biases.clone(),
        }
    }

    /// Mean of the reverse transition into `x_{t-1}` written as `A x_t + c`,
    /// from the usual noise parameterisation
    /// `mu = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t)`.
    pub fn reverse_mean_coefficients(&self, schedule: &NoiseSchedule, t: usize) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.dim();
        let k = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
        let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
        let a = (DMatrix::identity(d, d) - &self.weights[t - 1] * k) * inv_sqrt_alpha;
        let c = &self.biases[t - 1] * (-k * inv_sqrt_alpha);
        (a, c)
    }
}

/// Bayes-optimal affine noise predictor for data `x0 ~ N(mean, cov)`:
/// `E[eps | x_t] = sqrt(1 - ab) (ab cov + (1 - ab) I)^-1 (x_t - sqrt(ab) mean)`.
pub fn optimal_denoiser(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    schedule: &NoiseSchedule,
) -> Result<AffineDenoiser, DiffusionError> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(DiffusionError::DimensionMismatch {
            expected: d,
            got: cov.nrows(),
        });
    }
    check_psd(cov)?;
    let identity = DMatrix::<f64>::identity(d, d);
    let mut weights = Vec::with_capacity(schedule.steps());
    let mut biases = Vec::with_capacity(schedule.steps());
    for t in 1..=schedule.steps() {
        let ab = schedule.alpha_bar(t);
        let var = cov * ab + &identity * (1.0 - ab);
        let inv = match var.clone().try_inverse() {
            Some(inv) => inv,
            None => {
                log::warn!("noised-data covariance at t = {t} is singular; using the pseudo-inverse");
                var.pseudo_inverse(1e-12)
                    .map_err(|e| DiffusionError::SingularCovariance(e.to_string()))?
            }
        };
        let w = inv * (1.0 - ab).sqrt();
        let b = -(&w * mean) * ab.sqrt();
        weights.push(w);
        biases.push(b);
    }
    AffineDenoiser::new(weights, biases)
}

fn check_psd(cov: &DMatrix<f64>) -> Result<(), DiffusionError> {
    let asym = (cov - cov.transpose()).abs().max();
    let scale = cov.abs().max().max(1.0);
    if asym > 1e-10 * scale {
        return Err(DiffusionError::SingularCovariance("covariance is not symmetric".into()));
    }
    let min_eig = cov.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-10 * scale {
        return Err(DiffusionError::SingularCovariance(format!(
            "covariance has negative eigenvalue {min_eig}"
        )));
    }
    Ok(())
}
