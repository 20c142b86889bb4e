mod common;

use common::random_model;
use fade_core::lm::{
    make_synthetic_tofu, truth_ratio_against, unlearn_ga, unlearn_gd, TabularLM, TofuWorldConfig, Token, Vocab,
};
use fade_core::SeedStream;
use proptest::prelude::*;

const EOS: Token = 0;

fn rows_sum_to_one(m: &TabularLM) -> bool {
    m.rows().all(|(_, row)| (row.iter().sum::<f64>() - 1.0).abs() < 1e-9)
}

fn tokens(max: Token) -> impl Strategy<Value = Vec<Token>> {
    prop::collection::vec(1..max, 0..6)
}

proptest! {
    #[test]
    fn chain_rule(seed in any::<u64>(), order in 0..3usize, c in tokens(6), x in tokens(6), mut y in tokens(6)) {
        let vocab = Vocab::new(6, EOS).unwrap();
        let mut rng = SeedStream::new(seed).rng(0);
        let rows: Vec<(Vec<Token>, Vec<f64>)> = (0..6)
            .flat_map(|a| (0..6).map(move |b| vec![a, b]))
            .chain((0..6).map(|a| vec![a]))
            .chain([vec![]])
            .filter(|ctx| ctx.len() <= order)
            .map(|ctx| (ctx, common::random_distribution(6, &mut rng)))
            .collect();
        let m = TabularLM::from_rows(vocab, order, rows).unwrap();
        y.push(EOS);
        let joined: Vec<Token> = x.iter().chain(&y).copied().collect();
        let extended: Vec<Token> = c.iter().chain(&x).copied().collect();
        let whole = m.logp(&c, &joined).unwrap();
        let parts = m.log_prob_prefix(&c, &x).unwrap() + m.logp(&extended, &y).unwrap();
        prop_assert!((whole - parts).abs() < 1e-12);
        prop_assert!(whole <= 0.0);
    }

    #[test]
    fn sampling_is_deterministic_per_seed(seed in any::<u64>()) {
        let m = random_model(Vocab::new(5, EOS).unwrap(), 1, &mut SeedStream::new(3).rng(0));
        let a = m.sample(&[1], 20, &mut SeedStream::new(seed).rng(1));
        let b = m.sample(&[1], 20, &mut SeedStream::new(seed).rng(1));
        prop_assert_eq!(a, b);
    }
}

#[test]
fn rows_stay_normalised_through_training_and_unlearning() {
    let config = TofuWorldConfig {
        n_profiles: 20,
        qa_per_profile: 10,
        ..TofuWorldConfig::default()
    };
    let world = make_synthetic_tofu(&mut SeedStream::new(4).rng(0), &config).unwrap();
    let all: Vec<_> = world.split.all_items().cloned().collect();
    for order in 0..=3 {
        let base = TabularLM::train(&all, world.vocab, order, 0.1).unwrap();
        assert!(rows_sum_to_one(&base));
        for epochs in [1, 5, 20] {
            assert!(rows_sum_to_one(&unlearn_ga(
                &base,
                &world.split.forget_items,
                1.5,
                epochs
            )));
            assert!(rows_sum_to_one(&unlearn_gd(
                &base,
                &world.split.forget_items,
                &world.split.retain_items,
                1.5,
                epochs
            )));
        }
    }
}

#[test]
fn sampled_next_token_frequencies_match_the_table() {
    let m = random_model(Vocab::new(6, EOS).unwrap(), 1, &mut SeedStream::new(12).rng(0));
    let n = 100_000;
    let mut counts = [0usize; 6];
    let mut rng = SeedStream::new(13).rng(0);
    for _ in 0..n {
        counts[m.sample(&[2], 1, &mut rng)[0] as usize] += 1;
    }
    for (tok, &p) in m.next_distribution(&[2]).iter().enumerate() {
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        let diff = (counts[tok] as f64 - n as f64 * p).abs();
        assert!(diff <= 3.0 * sd, "token {tok}: {} vs {}", counts[tok], n as f64 * p);
    }
}

#[test]
fn deterministic_model_ignores_the_seed() {
    let vocab = Vocab::new(4, EOS).unwrap();
    let m = TabularLM::from_rows(
        vocab,
        1,
        [
            (vec![1], vec![0.0, 0.0, 1.0, 0.0]),
            (vec![2], vec![0.0, 0.0, 0.0, 1.0]),
            (vec![3], vec![1.0, 0.0, 0.0, 0.0]),
        ],
    )
    .unwrap();
    for seed in 0..20 {
        assert_eq!(m.sample(&[1], 10, &mut SeedStream::new(seed).rng(0)), vec![2, 3, EOS]);
    }
    assert_eq!(m.logp(&[1], &[2, 3, EOS]).unwrap(), 0.0);
}

/// Order-1 model in which answer token `a` is followed by EOS, optionally
/// through a deterministic filler token.
fn answer_model(with_filler: bool) -> TabularLM {
    const FILLER: Token = 5;
    let vocab = Vocab::new(6, EOS).unwrap();
    let mut rows = vec![(vec![1], vec![0.0, 0.0, 0.5, 0.3, 0.2, 0.0])];
    for a in 2..5 {
        let mut row = vec![0.0; 6];
        row[if with_filler { FILLER } else { EOS } as usize] = 1.0;
        rows.push((vec![a], row));
    }
    rows.push((vec![FILLER], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
    TabularLM::from_rows(vocab, 1, rows).unwrap()
}

#[test]
fn shared_certain_suffix_rescales_the_log_ratio() {
    let plain = answer_model(false);
    let padded = answer_model(true);
    let base = truth_ratio_against(&plain, &[1], &[2, EOS], &[vec![4, EOS]]).unwrap();
    let longer = truth_ratio_against(&padded, &[1], &[2, 5, EOS], &[vec![4, 5, EOS]]).unwrap();
    // log TR scales by L / (L + s) with L = 2, s = 1
    assert!((longer.ln() - base.ln() * 2.0 / 3.0).abs() < 1e-12);
    assert!(longer > base && longer < 1.0);
}
