//! Toy QA unlearning scenario.
//!
//! A synthetic world is split into retain and forget items. A base model is
//! trained on everything and retain models on the retain items only, each
//! retain model with its own data seed. The base model is then unlearned
//! with the GA and GD analogues, and every epoch is compared against the
//! first retain model on the forget questions with
//!
//! - FADE from sampled answers scored under both models, and
//! - forget quality from truth ratios, once with the paraphrase as the
//!   reference answer and once with the original answer.
//!
//! The seed baseline is the FADE between retain models of different seeds.

use fade_core::lm::{
    make_synthetic_tofu, sample_and_score, truth_ratio, truth_ratio_against, unlearn_ga, unlearn_gd, QAItem,
    SyntheticTofu, TabularLM, TofuWorldConfig,
};
use fade_core::{dataset_fade, forget_quality, KsMode, SeedStream};
use serde::Serialize;

use crate::config::TofuConfig;
use crate::error::Result;
use crate::report::Table;

const WORLD_STREAM: u64 = 0;
const TRAINING_STREAM: u64 = 1;
const SAMPLING_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ga,
    Gd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ga => "ga",
            Method::Gd => "gd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub method: Method,
    pub epoch: usize,
    pub fade: f64,
    pub fade_se: f64,
    pub fq_paraphrase: f64,
    pub fq_original: f64,
    pub ks_mode: KsMode,
    pub truncated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TofuRun {
    pub n_forget: usize,
    pub n_retain: usize,
    pub points: Vec<TrajectoryPoint>,
    /// FADE of every retain-vs-retain seed pair `(i, j, fade)`.
    pub baseline_pairs: Vec<(usize, usize, f64)>,
    pub baseline: f64,
    pub checks: Vec<Check>,
}

impl TofuRun {
    pub fn point(&self, method: Method, epoch: usize) -> Option<&TrajectoryPoint> {
        self.points.iter().find(|p| p.method == method && p.epoch == epoch)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn trajectory_table(&self) -> Table {
        let mut t = Table::new(
            "trajectories",
            &[
                "method",
                "epoch",
                "fade",
                "fade_se",
                "fq_paraphrase",
                "fq_original",
                "ks_mode",
                "truncated",
            ],
        );
        for p in &self.points {
            t.push(vec![
                p.method.as_str().into(),
                p.epoch.into(),
                p.fade.into(),
                p.fade_se.into(),
                p.fq_paraphrase.into(),
                p.fq_original.into(),
                p.ks_mode.as_str().into(),
                p.truncated.into(),
            ]);
        }
        t
    }
}

struct Evaluator<'a> {
    config: &'a TofuConfig,
    forget: &'a [QAItem],
    sampling: SeedStream,
}

impl Evaluator<'_> {
    /// Dataset FADE over the forget questions, its mean per-prompt standard
    /// error and the number of truncated samples.
    fn fade(&self, retain: &TabularLM, other: &TabularLM) -> Result<(f64, f64, usize)> {
        let mut groups = std::collections::BTreeMap::new();
        let mut truncated = 0;
        for (i, item) in self.forget.iter().enumerate() {
            let scored = sample_and_score(
                retain,
                other,
                &item.id,
                &item.question,
                self.config.samples_per_prompt,
                self.config.max_new_tokens,
                self.sampling.child(i as u64),
            )?;
            truncated += scored.truncated;
            groups.insert(item.id.clone(), scored.records);
        }
        let d = dataset_fade(&groups)?;
        let se = d.per_prompt.iter().map(|(_, e)| e.combined_se()).sum::<f64>() / d.per_prompt.len() as f64;
        Ok((d.aggregate, se, truncated))
    }

    fn truth_ratios(&self, model: &TabularLM, original: bool) -> Result<Vec<f64>> {
        self.forget
            .iter()
            .map(|item| {
                let tr = if original {
                    truth_ratio_against(model, &item.question, &item.answer, &item.perturbed)?
                } else {
                    truth_ratio(model, item)?
                };
                Ok(tr)
            })
            .collect()
    }
}

pub fn world_config(config: &TofuConfig) -> TofuWorldConfig {
    TofuWorldConfig {
        n_profiles: config.n_profiles,
        qa_per_profile: config.qa_per_profile,
        vocab_size: config.vocab_size,
        forget_fraction: config.forget_fraction,
        n_perturbed: config.n_perturbed,
    }
}

pub fn build_world(config: &TofuConfig, seed: u64) -> Result<SyntheticTofu> {
    let seeds = SeedStream::new(seed);
    Ok(make_synthetic_tofu(
        &mut seeds.rng(WORLD_STREAM),
        &world_config(config),
    )?)
}

pub fn run_toy_tofu(config: &TofuConfig, seed: u64) -> Result<TofuRun> {
    let seeds = SeedStream::new(seed);
    let world = build_world(config, seed)?;
    let training = seeds.child(TRAINING_STREAM);
    let data_seed = |k: usize| training.child(k as u64).root();
    let all_items: Vec<QAItem> = world.split.all_items().cloned().collect();
    let retain_items = &world.split.retain_items;
    let forget_items = &world.split.forget_items;

    let train = |items: &[QAItem], k: usize| -> Result<TabularLM> {
        let corpus = world.training_corpus(items, data_seed(k), config.jitter);
        Ok(TabularLM::train(&corpus, world.vocab, config.order, config.smoothing)?)
    };
    let base = train(&all_items, 0)?;
    let retain_models: Vec<TabularLM> = (0..config.retain_seeds)
        .map(|k| train(retain_items, k))
        .collect::<Result<_>>()?;
    let retain = &retain_models[0];

    let eval = Evaluator {
        config,
        forget: forget_items,
        sampling: seeds.child(SAMPLING_STREAM),
    };
    let tr_retain_para = eval.truth_ratios(retain, false)?;
    let tr_retain_orig = eval.truth_ratios(retain, true)?;

    let mut points = Vec::new();
    for method in [Method::Ga, Method::Gd] {
        for epoch in 0..=config.epochs {
            let model = match method {
                Method::Ga => unlearn_ga(&base, forget_items, config.strength, epoch),
                Method::Gd => unlearn_gd(&base, forget_items, retain_items, config.strength, epoch),
            };
            let (fade, fade_se, truncated) = eval.fade(retain, &model)?;
            let fq_para = forget_quality(&tr_retain_para, &eval.truth_ratios(&model, false)?)?;
            let fq_orig = forget_quality(&tr_retain_orig, &eval.truth_ratios(&model, true)?)?;
            log::info!(
                "{} epoch {epoch}: fade {fade:.4}, fq {:.3} / {:.3}",
                method.as_str(),
                fq_para.log10_p,
                fq_orig.log10_p
            );
            points.push(TrajectoryPoint {
                method,
                epoch,
                fade,
                fade_se,
                fq_paraphrase: fq_para.log10_p,
                fq_original: fq_orig.log10_p,
                ks_mode: fq_para.ks.mode,
                truncated,
            });
        }
    }

    let mut baseline_pairs = Vec::new();
    for i in 0..retain_models.len() {
        for j in i + 1..retain_models.len() {
            let (fade, _, _) = eval.fade(&retain_models[i], &retain_models[j])?;
            baseline_pairs.push((i, j, fade));
        }
    }
    let baseline = baseline_pairs.iter().map(|p| p.2).sum::<f64>() / baseline_pairs.len() as f64;

    let mut run = TofuRun {
        n_forget: forget_items.len(),
        n_retain: retain_items.len(),
        points,
        baseline_pairs,
        baseline,
        checks: Vec::new(),
    };
    run.checks = directional_checks(&run, config.epochs);
    Ok(run)
}

/// The directional claims checked on every run.
fn directional_checks(run: &TofuRun, epochs: usize) -> Vec<Check> {
    let mut checks = Vec::new();
    let late: Vec<&TrajectoryPoint> = run
        .points
        .iter()
        .filter(|p| p.method == Method::Ga && p.epoch >= 3)
        .collect();
    let worst = late
        .iter()
        .map(|p| format!("epoch {}: {:.3} vs {:.3}", p.epoch, p.fq_paraphrase, p.fq_original))
        .collect::<Vec<_>>()
        .join("; ");
    checks.push(Check {
        name: "fq_paraphrase_above_original".into(),
        passed: !late.is_empty() && late.iter().all(|p| p.fq_paraphrase > p.fq_original),
        detail: format!("GA forget quality with paraphrase vs original references at epoch >= 3: {worst}"),
    });
    for method in [Method::Ga, Method::Gd] {
        let (start, end) = match (run.point(method, 0), run.point(method, epochs)) {
            (Some(s), Some(e)) => (s.fade, e.fade),
            _ => continue,
        };
        checks.push(Check {
            name: format!("fade_increases_{}", method.as_str()),
            passed: end > start,
            detail: format!(
                "{} FADE epoch {epochs} = {end:.4} vs epoch 0 = {start:.4}",
                method.as_str()
            ),
        });
    }
    let min_fade = run.points.iter().map(|p| p.fade).fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "baseline_below_unlearned".into(),
        passed: run.baseline < min_fade,
        detail: format!(
            "retain-retain baseline {:.4} vs smallest unlearned FADE {min_fade:.4}",
            run.baseline
        ),
    });
    checks
}
