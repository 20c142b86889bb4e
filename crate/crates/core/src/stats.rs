//! Two-sample Kolmogorov–Smirnov test and the forget-quality metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest `n * m` for which the exact lattice-path p-value is computed.
pub const EXACT_MAX_PRODUCT: u64 = 10_000;

/// Lower clamp applied to p-values before taking logarithms.
pub const MIN_P_VALUE: f64 = 1e-300;

/// Description of the effective sample size used by the asymptotic mode.
pub const ASYMPTOTIC_CONVENTION: &str = "lambda = D * sqrt(n*m/(n+m))";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KsError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFiniteSample,
    #[error("exact p-value needs n*m <= {EXACT_MAX_PRODUCT}, got {n}*{m}")]
    InfeasibleExact { n: usize, m: usize },
    #[error("statistic {0} is outside [0, 1]")]
    InvalidStatistic(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KsMode {
    Exact,
    Asymptotic,
}

impl KsMode {
    /// Exact when the lattice is small enough, asymptotic otherwise.
    pub fn auto(n: usize, m: usize) -> Self {
        if (n as u64).saturating_mul(m as u64) <= EXACT_MAX_PRODUCT {
            KsMode::Exact
        } else {
            KsMode::Asymptotic
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KsMode::Exact => "exact",
            KsMode::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub mode: KsMode,
    pub n: usize,
    pub m: usize,
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>, KsError> {
    if xs.is_empty() {
        return Err(KsError::EmptySample);
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(KsError::NonFiniteSample);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Sup-norm distance between the two empirical CDFs, with both CDFs
/// evaluated at every pooled sample point so ties are handled exactly.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> Result<f64, KsError> {
    let xs = sorted(xs)?;
    let ys = sorted(ys)?;
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: u64 = 0;
    while i < n || j < m {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        // |i/n - j/m| * n * m, kept in integers
        let gap = (i as u64 * m as u64).abs_diff(j as u64 * n as u64);
        best = best.max(gap);
    }
    Ok(best as f64 / (n as f64 * m as f64))
}

/// P(D >= statistic) under the null hypothesis that both samples come from
/// the same continuous distribution.
pub fn ks_pvalue(statistic: f64, n: usize, m: usize, mode: KsMode) -> Result<f64, KsError> {
    if n == 0 || m == 0 {
        return Err(KsError::EmptySample);
    }
    if !(0.0..=1.0).contains(&statistic) {
        return Err(KsError::InvalidStatistic(statistic));
    }
    let p = match mode {
        KsMode::Exact => {
            if (n as u64).saturating_mul(m as u64) > EXACT_MAX_PRODUCT {
                return Err(KsError::InfeasibleExact { n, m });
            }
            // canonical orientation
            exact_pvalue(statistic, n.min(m), n.max(m))
        }
        KsMode::Asymptotic => {
            let effective = (n as f64 * m as f64) / (n + m) as f64;
            kolmogorov_survival(statistic * effective.sqrt())
        }
    };
    Ok(p.clamp(MIN_P_VALUE, 1.0))
}

/// Probability that a uniformly random interleaving of `n` x-steps and `m`
/// y-steps touches the region `|i/n - j/m| >= d`. The absorbed mass is
/// accumulated directly, so small p-values keep full relative precision.
fn exact_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let threshold = d * n as f64 * m as f64;
    // statistics are multiples of 1/(n m); the slack absorbs rounding in d
    let slack = 1e-9 * threshold.max(1.0);
    let hits = |i: usize, j: usize| -> bool {
        let gap = (i as u64 * m as u64).abs_diff(j as u64 * n as u64) as f64;
        gap >= threshold - slack
    };
    if hits(0, 0) {
        return 1.0;
    }
    let width = m + 1;
    let mut alive = vec![0.0f64; (n + 1) * width];
    alive[0] = 1.0;
    let mut absorbed = 0.0;
    for i in 0..=n {
        for j in 0..=m {
            let mass = alive[i * width + j];
            if mass == 0.0 {
                continue;
            }
            let remaining = (n + m - i - j) as f64;
            if i < n {
                let step = mass * (n - i) as f64 / remaining;
                if hits(i + 1, j) {
                    absorbed += step;
                } else {
                    alive[(i + 1) * width + j] += step;
                }
            }
            if j < m {
                let step = mass * (m - j) as f64 / remaining;
                if hits(i, j + 1) {
                    absorbed += step;
                } else {
                    alive[i * width + j + 1] += step;
                }
            }
        }
    }
    absorbed.min(1.0)
}

/// Kolmogorov distribution survival function
/// `Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)`.
/// Below `lambda = 1.18` the equivalent theta-function form is summed
/// instead, since the alternating series converges slowly there.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        for k in 1..=20 {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * pi2 / (8.0 * lambda * lambda)).exp();
            cdf += term;
            if term < 1e-17 * cdf {
                break;
            }
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut q = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            q += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 * q.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        (2.0 * q).clamp(0.0, 1.0)
    }
}

/// Full two-sample test with the mode chosen by [`KsMode::auto`].
pub fn ks_test(xs: &[f64], ys: &[f64]) -> Result<KsResult, KsError> {
    let statistic = ks_statistic(xs, ys)?;
    let (n, m) = (xs.len(), ys.len());
    let mode = KsMode::auto(n, m);
    Ok(KsResult {
        statistic,
        p_value: ks_pvalue(statistic, n, m, mode)?,
        mode,
        n,
        m,
    })
}

/// Forget quality: `log10` of the KS p-value comparing truth-ratio samples
/// of the retain and unlearned models. 0 is optimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgetQuality {
    pub log10_p: f64,
    pub ks: KsResult,
}

pub fn forget_quality(truth_ratios_retain: &[f64], truth_ratios_unlearned: &[f64]) -> Result<ForgetQuality, KsError> {
    let ks = ks_test(truth_ratios_retain, truth_ratios_unlearned)?;
    Ok(ForgetQuality {
        log10_p: ks.p_value.max(MIN_P_VALUE).log10(),
        ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistic_examples() {
        assert_eq!(ks_statistic(&[3.0, 1.0, 2.0, 2.0], &[2.0, 1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert_eq!(ks_statistic(&[], &[1.0]), Err(KsError::EmptySample));
        assert_eq!(ks_statistic(&[f64::NAN], &[1.0]), Err(KsError::NonFiniteSample));
    }

    #[test]
    fn pvalue_examples() {
        assert_eq!(ks_pvalue(0.0, 4, 7, KsMode::Exact).unwrap(), 1.0);
        assert_eq!(ks_pvalue(0.0, 4, 7, KsMode::Asymptotic).unwrap(), 1.0);
        let p = ks_pvalue(1.0, 3, 3, KsMode::Exact).unwrap();
        assert!((p - 0.1).abs() < 1e-15);
        assert_eq!(
            ks_pvalue(0.5, 101, 100, KsMode::Exact),
            Err(KsError::InfeasibleExact { n: 101, m: 100 })
        );
        assert!(ks_pvalue(1.5, 3, 3, KsMode::Exact).is_err());
    }

    #[test]
    fn forget_quality_examples() {
        let s = [0.3, 0.9, 1.2, 0.4];
        assert_eq!(forget_quality(&s, &s).unwrap().log10_p, 0.0);
        let fq = forget_quality(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((fq.log10_p + 1.0).abs() < 1e-12);
        assert_eq!(fq.ks.mode, KsMode::Exact);
    }

    #[test]
    fn mode_switches_at_threshold() {
        assert_eq!(KsMode::auto(100, 100), KsMode::Exact);
        assert_eq!(KsMode::auto(100, 101), KsMode::Asymptotic);
    }

    #[test]
    fn tiny_pvalues_keep_precision() {
        // fully separated n = m = 50: p = 2 / C(100, 50)
        let p = ks_pvalue(1.0, 50, 50, KsMode::Exact).unwrap();
        let log_c = (1..=50).map(|k| ((50 + k) as f64 / k as f64).log10()).sum::<f64>();
        assert!((p.log10() - (2f64.log10() - log_c)).abs() < 1e-9);
    }

    #[test]
    fn survival_function_values() {
        // reference values of the Kolmogorov distribution
        assert!((kolmogorov_survival(1.0) - 0.26999967).abs() < 1e-7);
        assert!((kolmogorov_survival(1.36) - 0.04946).abs() < 1e-4);
        assert!((kolmogorov_survival(0.5) - 0.96394524).abs() < 1e-7);
        // both branches agree at the switch point
        let a = kolmogorov_survival(1.18 - 1e-12);
        let b = kolmogorov_survival(1.18);
        assert!((a - b).abs() < 1e-10);
    }
}
