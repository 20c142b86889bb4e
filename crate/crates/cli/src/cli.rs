use std::path::PathBuf;

use clap::{Args as ClapArgs, Parser, Subcommand, ValueEnum};

use crate::report::OutputFormat;
use fade_core::format::RecordKind;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "fade-kit",
    version,
    about = "Bidirectional likelihood-gap (FADE) evaluation toolkit"
)]
pub struct Args {
    /// Root seed for every random choice; falls back to FADE_KIT_SEED, then 0.
    #[arg(long, global = true, env = "FADE_KIT_SEED")]
    pub seed: Option<u64>,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value = "md")]
    pub format: OutputFormat,

    /// Output file (or directory for `simulate`); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// FADE from paired log-likelihood records.
    Fade(FadeArgs),
    /// FADE for diffusion models from a loss trace or the linear-Gaussian scenario.
    FadeDiffusion(FadeDiffusionArgs),
    /// KS forget quality from two truth-ratio files.
    ForgetQuality(ForgetQualityArgs),
    /// Truth ratios of QA items under a tabular model, as a truth_ratios record file.
    TruthRatio(TruthRatioArgs),
    /// Seed-baseline FADE from retain-vs-retain record files.
    Baseline(BaselineArgs),
    /// Run a toy scenario end to end.
    #[command(subcommand)]
    Simulate(Scenario),
    /// Validate a record file against its schema.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, ClapArgs)]
pub struct FadeArgs {
    /// llm_likelihoods record file.
    #[arg(long)]
    pub records: PathBuf,
    /// Bootstrap resamples for confidence intervals (0 disables, otherwise >= 100).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    /// Retain-vs-retain record files whose mean aggregate is shown as the seed baseline.
    #[arg(long = "baseline-records")]
    pub baseline_records: Vec<PathBuf>,
}

#[derive(Debug, Clone, ClapArgs)]
pub struct FadeDiffusionArgs {
    /// diffusion_trace record file to replay.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub records: Option<PathBuf>,
    /// Linear-Gaussian scenario configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario timesteps: a count spread uniformly over 2..=T, or a comma-separated list.
    #[arg(long, conflicts_with = "records")]
    pub timesteps: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    Exact,
    Asymptotic,
}

impl ModeArg {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeArg::Auto => "auto",
            ModeArg::Exact => "exact",
            ModeArg::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, ClapArgs)]
pub struct ForgetQualityArgs {
    /// truth_ratios file scored under the retain model.
    #[arg(long)]
    pub retain: PathBuf,
    /// truth_ratios file scored under the unlearned model.
    #[arg(long)]
    pub unlearned: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub mode: ModeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceArg {
    Paraphrase,
    Original,
}

impl ReferenceArg {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceArg::Paraphrase => "paraphrase",
            ReferenceArg::Original => "original",
        }
    }
}

#[derive(Debug, Clone, ClapArgs)]
pub struct TruthRatioArgs {
    /// Tabular model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// QA items, one JSON object per line.
    #[arg(long)]
    pub items: PathBuf,
    /// Which answer serves as the reference in the denominator.
    #[arg(long, value_enum, default_value = "paraphrase")]
    pub reference: ReferenceArg,
}

#[derive(Debug, Clone, ClapArgs)]
pub struct BaselineArgs {
    /// One llm_likelihoods file per retain-vs-retain seed pair.
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Scenario {
    /// Synthetic QA world with GA/GD unlearning of tabular models.
    ToyTofu(ScenarioArgs),
}

#[derive(Debug, Clone, ClapArgs)]
pub struct ScenarioArgs {
    /// Scenario configuration (TOML); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, ClapArgs)]
pub struct ValidateArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub kind: RecordKind,
}

fn quote(s: &str) -> String {
    let plain = !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=:,+@".contains(c));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

fn path(p: &std::path::Path) -> String {
    quote(&p.display().to_string())
}

impl Args {
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Canonical command line reproducing this run's report. The output
    /// destination is left out since it does not affect the content.
    pub fn invocation(&self) -> String {
        let mut parts = vec![
            "fade-kit".to_string(),
            format!("--seed {}", self.effective_seed()),
            format!("--format {}", self.format.as_str()),
        ];
        match &self.command {
            Command::Fade(a) => {
                parts.push(format!("fade --records {}", path(&a.records)));
                if a.bootstrap > 0 {
                    parts.push(format!("--bootstrap {} --confidence {}", a.bootstrap, a.confidence));
                }
                for b in &a.baseline_records {
                    parts.push(format!("--baseline-records {}", path(b)));
                }
            }
            Command::FadeDiffusion(a) => {
                parts.push("fade-diffusion".into());
                if let Some(r) = &a.records {
                    parts.push(format!("--records {}", path(r)));
                }
                if let Some(c) = &a.config {
                    parts.push(format!("--config {}", path(c)));
                }
                if let Some(t) = &a.timesteps {
                    parts.push(format!("--timesteps {}", quote(t)));
                }
            }
            Command::ForgetQuality(a) => parts.push(format!(
                "forget-quality --retain {} --unlearned {} --mode {}",
                path(&a.retain),
                path(&a.unlearned),
                a.mode.as_str()
            )),
            Command::TruthRatio(a) => parts.push(format!(
                "truth-ratio --model {} --items {} --reference {}",
                path(&a.model),
                path(&a.items),
                a.reference.as_str()
            )),
            Command::Baseline(a) => {
                parts.push("baseline".into());
                for r in &a.records {
                    parts.push(format!("--records {}", path(r)));
                }
            }
            Command::Simulate(Scenario::ToyTofu(a)) => {
                parts.push("simulate toy-tofu".into());
                if let Some(c) = &a.config {
                    parts.push(format!("--config {}", path(c)));
                }
            }
            Command::Validate(a) => parts.push(format!("validate --records {} --kind {}", path(&a.records), a.kind)),
        }
        parts.join(" ")
    }
}
