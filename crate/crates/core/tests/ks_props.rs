use fade_core::stats::{ks_test, EXACT_MAX_PRODUCT, MIN_P_VALUE};
use fade_core::{forget_quality, ks_pvalue, ks_statistic, KsError, KsMode, SeedStream};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// P(D >= observed) by walking every assignment of `n` of the `n + m`
/// pooled ranks to the first sample.
fn brute_force_pvalue(xs: &[f64], ys: &[f64]) -> f64 {
    let (n, m) = (xs.len(), ys.len());
    let mut pooled: Vec<(f64, bool)> = xs
        .iter()
        .map(|&x| (x, true))
        .chain(ys.iter().map(|&y| (y, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gap_of = |labels: &dyn Fn(usize) -> bool| {
        let (mut i, mut j, mut best) = (0u64, 0u64, 0u64);
        for k in 0..n + m {
            if labels(k) {
                i += 1;
            } else {
                j += 1;
            }
            best = best.max((i * m as u64).abs_diff(j * n as u64));
        }
        best
    };
    let observed = gap_of(&|k| pooled[k].1);
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << (n + m)) {
        if mask.count_ones() as usize != n {
            continue;
        }
        total += 1;
        if gap_of(&|k| mask >> k & 1 == 1) >= observed {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

#[test]
fn exact_pvalues_match_enumeration() {
    let mut rng = SeedStream::new(77).rng(0);
    let mut cases = 0;
    for n in 1..=6usize {
        for _ in 0..40 {
            let mut values: Vec<f64> = (0..2 * n).map(|k| k as f64 + rng.random::<f64>() * 0.5).collect();
            values.shuffle(&mut rng);
            let (xs, ys) = values.split_at(n);
            let d = ks_statistic(xs, ys).unwrap();
            let exact = ks_pvalue(d, n, n, KsMode::Exact).unwrap();
            let brute = brute_force_pvalue(xs, ys);
            assert!((exact - brute).abs() < 1e-12, "n = {n}: {exact} vs {brute}");
            cases += 1;
        }
    }
    assert!(cases >= 200);
}

#[test]
fn fully_separated_three_by_three() {
    let (xs, ys) = ([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]);
    assert_eq!(ks_statistic(&xs, &ys).unwrap(), 1.0);
    assert_eq!(ks_pvalue(1.0, 3, 3, KsMode::Exact).unwrap(), 0.1);
    let fq = forget_quality(&xs, &ys).unwrap();
    assert_eq!(fq.log10_p, -1.0);
    assert_eq!(fq.ks.mode, KsMode::Exact);
}

#[test]
fn zero_statistic_gives_unit_pvalue() {
    for mode in [KsMode::Exact, KsMode::Asymptotic] {
        assert_eq!(ks_pvalue(0.0, 5, 7, mode).unwrap(), 1.0);
    }
}

#[test]
fn asymptotic_tracks_exact_at_fifty() {
    let mut worst: f64 = 0.0;
    for k in 1..=50 {
        let d = k as f64 / 50.0;
        let exact = ks_pvalue(d, 50, 50, KsMode::Exact).unwrap();
        let asym = ks_pvalue(d, 50, 50, KsMode::Asymptotic).unwrap();
        worst = worst.max((exact - asym).abs());
    }
    assert!(worst < 0.02, "max |exact - asymptotic| = {worst}");
}

#[test]
fn mode_switches_above_the_threshold() {
    assert_eq!(KsMode::auto(100, 100), KsMode::Exact);
    assert_eq!(KsMode::auto(100, 101), KsMode::Asymptotic);
    assert_eq!(EXACT_MAX_PRODUCT, 10_000);
    assert!(matches!(
        ks_pvalue(0.5, 101, 100, KsMode::Exact),
        Err(KsError::InfeasibleExact { .. })
    ));
    let xs: Vec<f64> = (0..101).map(f64::from).collect();
    assert_eq!(ks_test(&xs, &xs[..100]).unwrap().mode, KsMode::Asymptotic);
}

#[test]
fn tiny_pvalues_are_clamped() {
    let xs: Vec<f64> = (0..5000).map(f64::from).collect();
    let ys: Vec<f64> = (0..5000).map(|i| 1e6 + i as f64).collect();
    let fq = forget_quality(&xs, &ys).unwrap();
    assert_eq!(fq.ks.p_value, MIN_P_VALUE);
    assert_eq!(fq.log10_p, -300.0);
}

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 1..30)
}

proptest! {
    #[test]
    fn pvalue_non_increasing_in_statistic(n in 1..40usize, m in 1..40usize, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for mode in [KsMode::Exact, KsMode::Asymptotic] {
            let p_lo = ks_pvalue(lo, n, m, mode).unwrap();
            let p_hi = ks_pvalue(hi, n, m, mode).unwrap();
            prop_assert!(p_hi <= p_lo + 1e-12, "{:?}: p({}) = {} > p({}) = {}", mode, hi, p_hi, lo, p_lo);
            prop_assert!(p_hi > 0.0 && p_lo <= 1.0);
        }
    }

    #[test]
    fn forget_quality_is_symmetric(xs in sample(), ys in sample()) {
        let a = forget_quality(&xs, &ys).unwrap();
        let b = forget_quality(&ys, &xs).unwrap();
        prop_assert_eq!(a.log10_p, b.log10_p);
        prop_assert!(a.log10_p <= 0.0);
    }

    #[test]
    fn forget_quality_of_a_sample_with_itself_is_zero(xs in sample()) {
        prop_assert_eq!(forget_quality(&xs, &xs).unwrap().log10_p, 0.0);
        prop_assert_eq!(ks_statistic(&xs, &xs).unwrap(), 0.0);
    }

    #[test]
    fn statistic_is_a_fraction(xs in sample(), ys in sample()) {
        let d = ks_statistic(&xs, &ys).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }
}
