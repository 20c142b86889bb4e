//! Exact likelihoods for diffusion models with affine denoisers.
//!
//! Every reverse transition `p(x_{t-1} | x_t) = N(A_t x_t + c_t, v_t I)` is
//! affine-Gaussian, so starting from `x_T ~ N(0, I)` the model marginal of
//! `x_0` is Gaussian with mean and covariance propagated in closed form.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{AffineDenoiser, DiffusionError, NoiseSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMarginal {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMarginal {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cholesky(&self) -> Result<Cholesky<f64, Dyn>, DiffusionError> {
        Cholesky::new(self.cov.clone())
            .ok_or_else(|| DiffusionError::SingularCovariance("model marginal is not positive definite".into()))
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64, DiffusionError> {
        if x.len() != self.dim() {
            return Err(DiffusionError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let chol = self.cholesky()?;
        let diff = x - &self.mean;
        let solved = chol.solve(&diff);
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(-0.5 * (self.dim() as f64 * (2.0 * PI).ln() + log_det + diff.dot(&solved)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<DVector<f64>>, DiffusionError> {
        let l = self.cholesky()?.l();
        Ok((0..n)
            .map(|_| {
                let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
                &self.mean + &l * z
            })
            .collect())
    }
}

/// Closed-form Gaussian marginal of `x_0` under the reverse chain.
pub fn generative_marginal(
    denoiser: &AffineDenoiser,
    schedule: &NoiseSchedule,
) -> Result<GaussianMarginal, DiffusionError> {
    if denoiser.steps() != schedule.steps() {
        return Err(DiffusionError::DimensionMismatch {
            expected: schedule.steps(),
            got: denoiser.steps(),
        });
    }
    let d = denoiser.dim();
    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::identity(d, d);
    for t in (1..=schedule.steps()).rev() {
        let (a, c) = denoiser.reverse_mean_coefficients(schedule, t);
        mean = &a * mean + c;
        cov = &a * cov * a.transpose() + DMatrix::identity(d, d) * schedule.reverse_variance(t);
        // keep the propagated covariance exactly symmetric
        cov = (&cov + cov.transpose()) * 0.5;
    }
    Ok(GaussianMarginal { mean, cov })
}

/// Exact log-density (nats) of `x` under the model defined by `denoiser`.
pub fn exact_loglik_linear_gaussian(
    denoiser: &AffineDenoiser,
    schedule: &NoiseSchedule,
    x: &DVector<f64>,
) -> Result<f64, DiffusionError> {
    generative_marginal(denoiser, schedule)?.log_density(x)
}

/// `KL(a || b)` for two Gaussians, in nats.
pub fn gaussian_kl(a: &GaussianMarginal, b: &GaussianMarginal) -> Result<f64, DiffusionError> {
    if a.dim() != b.dim() {
        return Err(DiffusionError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let ca = a.cholesky()?;
    let cb = b.cholesky()?;
    let delta = &a.mean - &b.mean;
    let log_det = |c: &Cholesky<f64, Dyn>| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = cb.solve(&a.cov).trace();
    Ok(0.5 * (trace + delta.dot(&cb.solve(&delta)) - a.dim() as f64 + log_det(&cb) - log_det(&ca)))
}

/// `KL(a || b) + KL(b || a)` for two Gaussians.
pub fn gaussian_jeffreys(a: &GaussianMarginal, b: &GaussianMarginal) -> Result<f64, DiffusionError> {
    Ok(gaussian_kl(a, b)? + gaussian_kl(b, a)?)
}

/// Terms of the negative variational bound for one data point.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboTerms {
    /// `L_T = KL(q(x_T | x_0) || N(0, I))`.
    pub prior: f64,
    /// `L_{t-1}` for `t = 2..=T`, in order.
    pub transitions: Vec<f64>,
    /// `L_0 = E_q[-log p(x_0 | x_1)]`.
    pub decoder: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.prior + self.transitions.iter().sum::<f64>() + self.decoder
    }

    pub fn transition_sum(&self) -> f64 {
        self.transitions.iter().sum()
    }
}

/// Closed-form negative ELBO terms of `x0` under an affine-denoiser model.
pub fn negative_elbo(
    denoiser: &AffineDenoiser,
    schedule: &NoiseSchedule,
    x0: &DVector<f64>,
) -> Result<ElboTerms, DiffusionError> {
    let d = denoiser.dim();
    if x0.len() != d {
        return Err(DiffusionError::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    let df = d as f64;
    let steps = schedule.steps();
    let ab_t = schedule.alpha_bar(steps);
    let prior = 0.5 * (df * (1.0 - ab_t) + ab_t * x0.norm_squared() - df - df * (1.0 - ab_t).ln());

    // E ||M x_t + v||^2 for x_t ~ N(sqrt(ab) x0, (1 - ab) I)
    let expected_sq = |m: &DMatrix<f64>, v: &DVector<f64>, ab: f64| -> f64 {
        (m * x0 * ab.sqrt() + v).norm_squared() + (1.0 - ab) * m.norm_squared()
    };

    let mut transitions = Vec::with_capacity(steps - 1);
    for t in 2..=steps {
        let ab = schedule.alpha_bar(t);
        let ab_prev = schedule.alpha_bar(t - 1);
        let beta = schedule.beta(t);
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let ct = schedule.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let (a, c) = denoiser.reverse_mean_coefficients(schedule, t);
        let m = DMatrix::identity(d, d) * ct - a;
        let v = x0 * c0 - c;
        transitions.push(expected_sq(&m, &v, ab) / (2.0 * schedule.sigma2(t)));
    }

    let (a1, c1) = denoiser.reverse_mean_coefficients(schedule, 1);
    let var0 = schedule.decoder_variance();
    let m = -a1;
    let v = x0 - c1;
    let decoder = 0.5 * df * (2.0 * PI * var0).ln() + expected_sq(&m, &v, schedule.alpha_bar(1)) / (2.0 * var0);

    Ok(ElboTerms {
        prior,
        transitions,
        decoder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{build_schedule, optimal_denoiser, BetaSpec};
    use crate::seed::SeedStream;

    fn setup() -> (NoiseSchedule, AffineDenoiser) {
        let s = build_schedule(20, BetaSpec::Linear { start: 0.01, end: 0.4 }).unwrap();
        let mean = DVector::from_vec(vec![1.0, -0.5]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.6]);
        let den = optimal_denoiser(&mean, &cov, &s).unwrap();
        (s, den)
    }

    #[test]
    fn identical_models_have_zero_jeffreys() {
        let (s, den) = setup();
        let m = generative_marginal(&den, &s).unwrap();
        assert_eq!(gaussian_jeffreys(&m, &m.clone()).unwrap(), 0.0);
    }

    #[test]
    fn jeffreys_one_dimensional_closed_form() {
        let a = GaussianMarginal {
            mean: DVector::from_vec(vec![0.0]),
            cov: DMatrix::from_element(1, 1, 1.0),
        };
        let b = GaussianMarginal {
            mean: DVector::from_vec(vec![1.0]),
            cov: DMatrix::from_element(1, 1, 4.0),
        };
        // KL(a||b) = ln 2 + (1 + 1) / 8 - 1/2 ; KL(b||a) = -ln 2 + (4 + 1) / 2 - 1/2
        let expected = (2f64.ln() + 0.25 - 0.5) + (-(2f64.ln()) + 2.5 - 0.5);
        assert!((gaussian_jeffreys(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn kl_one_dimensional_closed_form() {
        let a = GaussianMarginal {
            mean: DVector::from_vec(vec![0.0]),
            cov: DMatrix::from_element(1, 1, 1.0),
        };
        let b = GaussianMarginal {
            mean: DVector::from_vec(vec![1.0]),
            cov: DMatrix::from_element(1, 1, 4.0),
        };
        assert!((gaussian_kl(&a, &b).unwrap() - (2f64.ln() + 0.25 - 0.5)).abs() < 1e-12);
        assert!((gaussian_kl(&b, &a).unwrap() - (-(2f64.ln()) + 2.5 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn variational_bound_dominates_exact_nll() {
        let (s, den) = setup();
        let marginal = generative_marginal(&den, &s).unwrap();
        let mut rng = SeedStream::new(4).rng(0);
        for x in marginal.sample(50, &mut rng).unwrap() {
            let nll = -marginal.log_density(&x).unwrap();
            let bound = negative_elbo(&den, &s, &x).unwrap().total();
            assert!(bound >= nll - 1e-9, "bound {bound} < nll {nll}");
        }
    }

    #[test]
    fn transition_term_is_gamma_weighted_noise_error() {
        // pointwise: |mu_tilde - mu_theta|^2 / (2 sigma2) = gamma |eps - eps_hat|^2
        let (s, den) = setup();
        let x0 = DVector::from_vec(vec![0.2, 0.9]);
        let eps = DVector::from_vec(vec![-1.1, 0.4]);
        for t in 2..=s.steps() {
            let ab = s.alpha_bar(t);
            let xt = &x0 * ab.sqrt() + &eps * (1.0 - ab).sqrt();
            let c0 = s.alpha_bar(t - 1).sqrt() * s.beta(t) / (1.0 - ab);
            let ct = s.alpha(t).sqrt() * (1.0 - s.alpha_bar(t - 1)) / (1.0 - ab);
            let mu_tilde = &x0 * c0 + &xt * ct;
            let (a, c) = den.reverse_mean_coefficients(&s, t);
            let mu_theta = a * &xt + c;
            let kl = (mu_tilde - mu_theta).norm_squared() / (2.0 * s.sigma2(t));
            let weighted = s.gamma(t) * (&eps - den.predict(&xt, t)).norm_squared();
            assert!(
                (kl - weighted).abs() < 1e-9 * kl.max(1.0),
                "t = {t}: {kl} vs {weighted}"
            );
        }
    }

    #[test]
    fn one_dimensional_density_integrates_to_one() {
        let s = build_schedule(8, BetaSpec::Linear { start: 0.05, end: 0.5 }).unwrap();
        let den = optimal_denoiser(&DVector::from_vec(vec![0.7]), &DMatrix::from_element(1, 1, 0.8), &s).unwrap();
        let marginal = generative_marginal(&den, &s).unwrap();
        let (lo, hi, n) = (-15.0, 15.0, 30_000);
        let h = (hi - lo) / n as f64;
        // composite Simpson
        let f = |x: f64| marginal.log_density(&DVector::from_vec(vec![x])).unwrap().exp();
        let mut total = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            total += w * f(lo + i as f64 * h);
        }
        assert!((total * h / 3.0 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn dimension_errors() {
        let (s, den) = setup();
        assert!(exact_loglik_linear_gaussian(&den, &s, &DVector::zeros(3)).is_err());
        assert!(negative_elbo(&den, &s, &DVector::zeros(1)).is_err());
    }
}
