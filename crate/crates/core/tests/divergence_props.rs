mod common;

use std::collections::BTreeMap;

use common::{categorical_records, BERNOULLI_JEFFREYS, BERNOULLI_P, BERNOULLI_Q};
use fade_core::divergence::group_by_prompt;
use fade_core::{
    baseline_fade, bootstrap_ci, bootstrap_dataset_ci, dataset_fade, exact_jeffreys_categorical, fade_for_prompt,
    DivergenceError, LikelihoodRecord, ModelTag, SeedStream,
};
use proptest::prelude::*;

fn record_strategy() -> impl Strategy<Value = Vec<LikelihoodRecord>> {
    let row = (any::<bool>(), -50.0..0.0f64, -50.0..0.0f64);
    (
        prop::collection::vec(row.clone(), 1..20),
        prop::collection::vec(row, 1..20),
    )
        .prop_map(|(fw, rv)| {
            let mut out = Vec::new();
            for (i, (_, a, b)) in fw.into_iter().enumerate() {
                out.push(LikelihoodRecord::new("p", format!("r{i}"), ModelTag::Retain, a, b));
            }
            for (i, (_, a, b)) in rv.into_iter().enumerate() {
                out.push(LikelihoodRecord::new("p", format!("u{i}"), ModelTag::Unlearned, a, b));
            }
            out
        })
}

proptest! {
    #[test]
    fn fade_is_non_negative(records in record_strategy()) {
        let est = fade_for_prompt(&records).unwrap();
        prop_assert!(est.fade >= 0.0);
        prop_assert!(est.se_forward >= 0.0 && est.se_reverse >= 0.0);
    }

    #[test]
    fn swapping_roles_preserves_fade(records in record_strategy()) {
        let a = fade_for_prompt(&records).unwrap();
        let swapped: Vec<_> = records.iter().map(LikelihoodRecord::swapped).collect();
        let b = fade_for_prompt(&swapped).unwrap();
        prop_assert!((a.fade - b.fade).abs() <= 1e-12 * a.fade.max(1.0));
    }

    #[test]
    fn common_shift_preserves_fade(records in record_strategy(), c in -100.0..100.0f64) {
        let a = fade_for_prompt(&records).unwrap();
        let shifted: Vec<_> = records
            .iter()
            .map(|r| LikelihoodRecord { logp_retain: r.logp_retain + c, logp_unlearned: r.logp_unlearned + c, ..r.clone() })
            .collect();
        let b = fade_for_prompt(&shifted).unwrap();
        prop_assert!((a.fade - b.fade).abs() <= 1e-9);
    }

    #[test]
    fn identical_likelihoods_give_exact_zero(records in record_strategy()) {
        let same: Vec<_> = records
            .iter()
            .map(|r| LikelihoodRecord { logp_unlearned: r.logp_retain, ..r.clone() })
            .collect();
        let est = fade_for_prompt(&same).unwrap();
        prop_assert_eq!(est.fade, 0.0);
        prop_assert_eq!(est.combined_se(), 0.0);
    }
}

fn rec(prompt: &str, id: &str, origin: ModelTag, a: f64, b: f64) -> LikelihoodRecord {
    LikelihoodRecord::new(prompt, id, origin, a, b)
}

#[test]
fn two_by_two_example() {
    // forward ratios 1, 3 (mean 2); reverse ratios -1, 0 (mean -0.5)
    let records = vec![
        rec("p", "r0", ModelTag::Retain, -1.0, -2.0),
        rec("p", "r1", ModelTag::Retain, -1.0, -4.0),
        rec("p", "u0", ModelTag::Unlearned, -2.0, -3.0),
        rec("p", "u1", ModelTag::Unlearned, -5.0, -5.0),
    ];
    let est = fade_for_prompt(&records).unwrap();
    assert_eq!(est.forward_term, 2.0);
    assert_eq!(est.reverse_term, -0.5);
    assert_eq!(est.fade, 2.5);
    assert_eq!((est.n_forward, est.n_reverse), (2, 2));
}

#[test]
fn single_sample_directions_have_zero_se() {
    let records = vec![
        rec("p", "r0", ModelTag::Retain, -1.0, -2.0),
        rec("p", "u0", ModelTag::Unlearned, -1.0, -3.0),
    ];
    let est = fade_for_prompt(&records).unwrap();
    assert_eq!(est.fade, 3.0);
    assert_eq!(est.combined_se(), 0.0);
}

#[test]
fn missing_direction_is_an_error() {
    let records = vec![rec("p", "r0", ModelTag::Retain, -1.0, -2.0)];
    assert!(matches!(
        fade_for_prompt(&records),
        Err(DivergenceError::MissingDirection { .. })
    ));
}

fn prompt_with_fade(prompt: &str, fade: f64) -> Vec<LikelihoodRecord> {
    vec![
        rec(prompt, "r0", ModelTag::Retain, 0.0, -fade),
        rec(prompt, "u0", ModelTag::Unlearned, 0.0, 0.0),
    ]
}

#[test]
fn dataset_is_the_mean_over_prompts() {
    let mut groups = BTreeMap::new();
    groups.insert("a".to_string(), prompt_with_fade("a", 0.4));
    assert_eq!(dataset_fade(&groups).unwrap().aggregate, 0.4);
    groups.insert("b".to_string(), prompt_with_fade("b", 0.6));
    assert!((dataset_fade(&groups).unwrap().aggregate - 0.5).abs() < 1e-15);
    assert_eq!(dataset_fade(&BTreeMap::new()), Err(DivergenceError::EmptyDataset));
}

#[test]
fn baseline_is_the_mean_over_pairs() {
    let pair = |f: f64| group_by_prompt(prompt_with_fade("a", f));
    assert!((baseline_fade(&[pair(0.2), pair(0.4)]).unwrap() - 0.3).abs() < 1e-15);
    assert_eq!(baseline_fade(&[pair(0.0)]).unwrap(), 0.0);
    assert_eq!(baseline_fade(&[]), Err(DivergenceError::EmptyDataset));
}

#[test]
fn bernoulli_monte_carlo_matches_closed_form() {
    let exact = exact_jeffreys_categorical(&BERNOULLI_P, &BERNOULLI_Q).unwrap();
    assert!((exact - BERNOULLI_JEFFREYS).abs() < 1e-6);
    let records = categorical_records(&BERNOULLI_P, &BERNOULLI_Q, 100_000, &mut SeedStream::new(11).rng(0));
    let est = fade_for_prompt(&records).unwrap();
    assert!(
        (est.fade - exact).abs() <= 3.0 * est.combined_se(),
        "fade {} vs {exact}, se {}",
        est.fade,
        est.combined_se()
    );
}

#[test]
fn bootstrap_interval_covers_the_closed_form() {
    let mut covered = 0;
    for rep in 0..100u64 {
        let seeds = SeedStream::new(1000 + rep);
        let records = categorical_records(&BERNOULLI_P, &BERNOULLI_Q, 2_000, &mut seeds.rng(0));
        let (lo, hi) = bootstrap_ci(&records, 500, 0.95, seeds.child(1).root()).unwrap();
        if lo <= BERNOULLI_JEFFREYS && BERNOULLI_JEFFREYS <= hi {
            covered += 1;
        }
    }
    assert!(covered >= 90, "coverage {covered}/100");
}

#[test]
fn bootstrap_is_deterministic() {
    let records = categorical_records(&BERNOULLI_P, &BERNOULLI_Q, 500, &mut SeedStream::new(3).rng(0));
    let a = bootstrap_ci(&records, 200, 0.9, 42).unwrap();
    let b = bootstrap_ci(&records, 200, 0.9, 42).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1.to_bits(), b.1.to_bits());
    let groups = group_by_prompt(records);
    assert_eq!(
        bootstrap_dataset_ci(&groups, 200, 0.9, 7).unwrap(),
        bootstrap_dataset_ci(&groups, 200, 0.9, 7).unwrap()
    );
}

#[test]
fn bootstrap_of_identical_likelihoods_is_degenerate() {
    let records: Vec<_> = (0..50)
        .flat_map(|i| {
            let x = -(i as f64) * 0.1;
            [
                rec("p", &format!("r{i}"), ModelTag::Retain, x, x),
                rec("p", &format!("u{i}"), ModelTag::Unlearned, x, x),
            ]
        })
        .collect();
    assert_eq!(bootstrap_ci(&records, 100, 0.95, 0).unwrap(), (0.0, 0.0));
    assert!(bootstrap_ci(&records, 99, 0.95, 0).is_err());
}

#[test]
fn categorical_oracle_examples() {
    assert_eq!(exact_jeffreys_categorical(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    assert!(matches!(
        exact_jeffreys_categorical(&[1.0, 0.0], &[0.0, 1.0]),
        Err(DivergenceError::DisjointSupport { .. })
    ));
}
