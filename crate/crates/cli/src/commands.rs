use std::collections::BTreeMap;
use std::path::Path;

use fade_core::diffusion::{fade_from_trace, TraceRow, MSE_CONVENTION};
use fade_core::format::{self, ingest, RecordKind, Schema, TruthRatioRecord};
use fade_core::lm::{truth_ratio, truth_ratio_against, QAItem, TabularLM};
use fade_core::stats::{ks_statistic, ASYMPTOTIC_CONVENTION, MIN_P_VALUE};
use fade_core::{
    baseline_fade, bootstrap_ci, bootstrap_dataset_ci, dataset_fade, ks_pvalue, KsMode, LikelihoodRecord, SeedStream,
};
use serde_json::json;

use crate::cli::{
    Args, BaselineArgs, Command, FadeArgs, FadeDiffusionArgs, ForgetQualityArgs, ModeArg, ReferenceArg, Scenario,
    ScenarioArgs, TruthRatioArgs, ValidateArgs,
};
use crate::config::{self, GaussianConfig, TofuConfig};
use crate::error::{CliError, Result};
use crate::report::{emit, InputFile, Provenance, Report, Table};
use crate::scenario::{gaussian, tofu};

pub fn run(args: &Args) -> Result<()> {
    match &args.command {
        Command::Fade(a) => finish(args, fade(args, a)?),
        Command::FadeDiffusion(a) => finish(args, fade_diffusion(args, a)?),
        Command::ForgetQuality(a) => finish(args, forget_quality(args, a)?),
        Command::TruthRatio(a) => truth_ratios(args, a),
        Command::Baseline(a) => finish(args, baseline(args, a)?),
        Command::Simulate(Scenario::ToyTofu(a)) => simulate_toy_tofu(args, a),
        Command::Validate(a) => finish(args, validate(args, a)?),
    }
}

fn finish(args: &Args, report: Report) -> Result<()> {
    emit(args.out.as_deref(), &report.render(args.format))
}

fn provenance(args: &Args, inputs: &[&Path], seeded: bool) -> Result<Provenance> {
    Ok(Provenance {
        tool: format!("fade-kit {}", env!("CARGO_PKG_VERSION")),
        invocation: args.invocation(),
        seed: seeded.then(|| args.effective_seed()),
        inputs: inputs.iter().map(|p| InputFile::hash(p)).collect::<Result<_>>()?,
    })
}

fn read_records<T: Schema>(path: &Path) -> Result<Vec<T>> {
    let reader = ingest::<T>(path).map_err(|e| CliError::ingest(path, e))?;
    reader.map(|r| r.map_err(|e| CliError::ingest(path, e))).collect()
}

fn read_groups(path: &Path) -> Result<BTreeMap<String, Vec<LikelihoodRecord>>> {
    Ok(fade_core::divergence::group_by_prompt(
        read_records::<LikelihoodRecord>(path)?,
    ))
}

fn fade(args: &Args, a: &FadeArgs) -> Result<Report> {
    if a.bootstrap > 0 && a.bootstrap < 100 {
        return Err(CliError::Validation(format!(
            "--bootstrap must be 0 or at least 100, got {}",
            a.bootstrap
        )));
    }
    if !(a.confidence > 0.0 && a.confidence < 1.0) {
        return Err(CliError::Validation(format!(
            "--confidence must lie in (0, 1), got {}",
            a.confidence
        )));
    }
    let mut inputs: Vec<&Path> = vec![&a.records];
    inputs.extend(a.baseline_records.iter().map(|p| p.as_path()));
    let seeded = a.bootstrap > 0;
    let mut report = Report::new(
        "FADE",
        provenance(args, &inputs, seeded)?,
        json!({
            "records": a.records.display().to_string(),
            "bootstrap": a.bootstrap,
            "confidence": a.confidence,
            "baseline_records": a.baseline_records.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        }),
    );

    let groups = read_groups(&a.records)?;
    let result = dataset_fade(&groups)?;
    let n_records: usize = groups.values().map(Vec::len).sum();
    let seeds = SeedStream::new(args.effective_seed());

    let mut columns = vec![
        "prompt_id",
        "fade",
        "forward_term",
        "reverse_term",
        "n_forward",
        "n_reverse",
        "se_forward",
        "se_reverse",
    ];
    if seeded {
        columns.extend(["ci_low", "ci_high"]);
    }
    let mut table = Table::new("per_prompt", &columns);
    for (i, (prompt_id, est)) in result.per_prompt.iter().enumerate() {
        let mut row = vec![
            prompt_id.as_str().into(),
            est.fade.into(),
            est.forward_term.into(),
            est.reverse_term.into(),
            est.n_forward.into(),
            est.n_reverse.into(),
            est.se_forward.into(),
            est.se_reverse.into(),
        ];
        if seeded {
            let (lo, hi) = bootstrap_ci(
                &groups[prompt_id],
                a.bootstrap,
                a.confidence,
                seeds.child(i as u64 + 1).root(),
            )?;
            row.extend([lo.into(), hi.into()]);
        }
        if est.n_forward == 1 || est.n_reverse == 1 {
            report.warnings.push(format!(
                "prompt `{prompt_id}` has a single sample in one direction; its standard error is reported as 0"
            ));
        }
        table.push(row);
    }

    let p = result.per_prompt.len() as f64;
    let aggregate_se = result
        .per_prompt
        .iter()
        .map(|(_, e)| e.combined_se().powi(2))
        .sum::<f64>()
        .sqrt()
        / p;
    report.metric("prompts", result.per_prompt.len());
    report.metric("records", n_records);
    report.metric("aggregate_fade", result.aggregate);
    report.metric("aggregate_se", aggregate_se);
    if seeded {
        let (lo, hi) = bootstrap_dataset_ci(&groups, a.bootstrap, a.confidence, seeds.child(0).root())?;
        report.metric("aggregate_ci_low", lo);
        report.metric("aggregate_ci_high", hi);
    }
    if !a.baseline_records.is_empty() {
        let pairs = a
            .baseline_records
            .iter()
            .map(|p| read_groups(p))
            .collect::<Result<Vec<_>>>()?;
        let base = baseline_fade(&pairs)?;
        report.metric("seed_baseline", base);
        report.metric("aggregate_minus_baseline", result.aggregate - base);
    }
    report.tables.push(table);
    report.annotations.push(
        "per-prompt FADE = |mean(logp_retain - logp_unlearned) over retain samples| + |mean(logp_unlearned - logp_retain) over unlearned samples|; aggregate = unweighted mean over prompts".into(),
    );
    if seeded {
        report.annotations.push(format!(
            "percentile bootstrap with {} resamples, resampling each direction within each prompt",
            a.bootstrap
        ));
    }
    Ok(report)
}

fn fade_diffusion(args: &Args, a: &FadeDiffusionArgs) -> Result<Report> {
    if let Some(path) = &a.records {
        let mut report = Report::new(
            "Diffusion FADE (trace replay)",
            provenance(args, &[path], false)?,
            json!({ "records": path.display().to_string() }),
        );
        let rows = read_records::<TraceRow>(path)?;
        let est = fade_from_trace(&rows)?;
        let mut ts: Vec<usize> = rows.iter().map(|r| r.t).collect();
        ts.sort_unstable();
        ts.dedup();
        report.metric("fade", est.fade);
        report.metric("forward_term", est.forward_term);
        report.metric("reverse_term", est.reverse_term);
        report.metric("n_forward", est.n_forward);
        report.metric("n_reverse", est.n_reverse);
        report.metric("combined_se", est.combined_se());
        report.metric("timesteps", ts.len());
        report.annotations.push(format!("mse convention: {MSE_CONVENTION}"));
        report.annotations.push(
            "rows repeating a (sample, origin, t) triple are averaged; per-sample ratios sum over timesteps".into(),
        );
        return Ok(report);
    }
    let path = a.config.as_deref().expect("clap enforces one source");
    let config: GaussianConfig = config::load(path)?;
    let timesteps = a
        .timesteps
        .as_deref()
        .map(|s| gaussian::parse_timesteps(s, config.steps))
        .transpose()?;
    let mut report = Report::new(
        "Diffusion FADE (linear-Gaussian scenario)",
        provenance(args, &[path], true)?,
        serde_json::to_value(&config).expect("config serialises"),
    );
    let run = gaussian::run_linear_gaussian(&config, timesteps, args.effective_seed())?;
    let n = run.pairs.len();
    let mut errors: Vec<f64> = run.pairs.iter().map(|p| p.relative_error).collect();
    errors.sort_by(f64::total_cmp);
    report.metric("pairs", n);
    report.metric("timesteps", run.timesteps.len());
    report.metric("sign_matches", run.sign_matches());
    report.metric("within_tolerance", run.within_tolerance());
    report.metric("fraction_within_tolerance", run.within_tolerance() as f64 / n as f64);
    report.metric("median_relative_error", errors[n / 2]);
    report.metric("max_relative_error", errors[n - 1]);
    report.tables.push(run.pair_table());
    report.annotations.push(format!("mse convention: {MSE_CONVENTION}"));
    report.annotations.push(
        "exact values are closed-form KL terms between the two models' Gaussian marginals of x_0; samples are drawn from those marginals".into(),
    );
    report.annotations.push(
        "gap_* = mean over 200 own samples of (negative ELBO - exact NLL); decoder_term = bound difference from the t = 1 decoder, which the loss-based estimate omits".into(),
    );
    Ok(report)
}

fn forget_quality(args: &Args, a: &ForgetQualityArgs) -> Result<Report> {
    let mut report = Report::new(
        "Forget quality",
        provenance(args, &[&a.retain, &a.unlearned], false)?,
        json!({
            "retain": a.retain.display().to_string(),
            "unlearned": a.unlearned.display().to_string(),
            "mode": a.mode.as_str(),
        }),
    );
    let values = |p: &Path| -> Result<Vec<f64>> {
        Ok(read_records::<TruthRatioRecord>(p)?
            .into_iter()
            .map(|r| r.value)
            .collect())
    };
    let xs = values(&a.retain)?;
    let ys = values(&a.unlearned)?;
    let (n, m) = (xs.len(), ys.len());
    let mode = match a.mode {
        ModeArg::Auto => KsMode::auto(n, m),
        ModeArg::Exact => KsMode::Exact,
        ModeArg::Asymptotic => KsMode::Asymptotic,
    };
    let statistic = ks_statistic(&xs, &ys)?;
    let p = ks_pvalue(statistic, n, m, mode)?;
    report.metric("forget_quality", p.max(MIN_P_VALUE).log10());
    report.metric("ks_statistic", statistic);
    report.metric("p_value", p);
    report.metric("mode", mode.as_str());
    report.metric("n_retain", n);
    report.metric("n_unlearned", m);
    report
        .annotations
        .push("forget quality = log10 of the two-sample KS p-value, 0 is optimal".into());
    if mode == KsMode::Asymptotic {
        report
            .annotations
            .push(format!("asymptotic p-value: {ASYMPTOTIC_CONVENTION}"));
    } else {
        report
            .annotations
            .push("exact p-value by lattice-path enumeration".into());
    }
    Ok(report)
}

fn truth_ratios(args: &Args, a: &TruthRatioArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| CliError::io(&a.model, e))?;
    let model: TabularLM =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", a.model.display())))?;
    let items_text = std::fs::read_to_string(&a.items).map_err(|e| CliError::io(&a.items, e))?;
    let mut out = Vec::new();
    out.extend_from_slice(
        format!(
            "{{\"schema_version\":{},\"kind\":\"{}\"}}\n",
            format::SCHEMA_VERSION,
            RecordKind::TruthRatios
        )
        .as_bytes(),
    );
    let mut values = Vec::new();
    for (i, line) in items_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("{}: line {}: {e}", a.items.display(), i + 1)))?;
        let tr = match a.reference {
            ReferenceArg::Paraphrase => truth_ratio(&model, &item)?,
            ReferenceArg::Original => {
                item.validate(&model.vocab())?;
                truth_ratio_against(&model, &item.question, &item.answer, &item.perturbed)?
            }
        };
        values.push(TruthRatioRecord { value: tr });
    }
    if values.is_empty() {
        return Err(CliError::Validation(format!("{}: no QA items", a.items.display())));
    }
    format::write_jsonl(&mut out, values).map_err(|e| CliError::Io(e.to_string()))?;
    emit(args.out.as_deref(), &String::from_utf8(out).expect("json is utf-8"))
}

fn baseline(args: &Args, a: &BaselineArgs) -> Result<Report> {
    let inputs: Vec<&Path> = a.records.iter().map(|p| p.as_path()).collect();
    let mut report = Report::new(
        "Seed baseline FADE",
        provenance(args, &inputs, false)?,
        json!({ "records": a.records.iter().map(|p| p.display().to_string()).collect::<Vec<_>>() }),
    );
    let mut table = Table::new("seed_pairs", &["records", "prompts", "aggregate_fade"]);
    let mut pairs = Vec::new();
    for path in &a.records {
        let groups = read_groups(path)?;
        let d = dataset_fade(&groups)?;
        table.push(vec![
            path.display().to_string().into(),
            d.per_prompt.len().into(),
            d.aggregate.into(),
        ]);
        pairs.push(groups);
    }
    report.metric("seed_pairs", pairs.len());
    report.metric("baseline_fade", baseline_fade(&pairs)?);
    report.tables.push(table);
    report
        .annotations
        .push("baseline = unweighted mean of per-pair dataset aggregates".into());
    Ok(report)
}

fn simulate_toy_tofu(args: &Args, a: &ScenarioArgs) -> Result<()> {
    let config: TofuConfig = match &a.config {
        Some(p) => config::load(p)?,
        None => TofuConfig::default(),
    };
    let inputs: Vec<&Path> = a.config.iter().map(|p| p.as_path()).collect();
    let mut report = Report::new(
        "Toy QA unlearning scenario",
        provenance(args, &inputs, true)?,
        serde_json::to_value(&config).expect("config serialises"),
    );
    let run = tofu::run_toy_tofu(&config, args.effective_seed())?;
    report.metric("forget_items", run.n_forget);
    report.metric("retain_items", run.n_retain);
    report.metric("seed_baseline_fade", run.baseline);
    report.metric("all_checks_passed", run.all_passed());
    let mut checks = Table::new("checks", &["check", "passed", "detail"]);
    for c in &run.checks {
        checks.push(vec![c.name.as_str().into(), c.passed.into(), c.detail.as_str().into()]);
    }
    report.tables.push(checks);
    let trajectories = run.trajectory_table();
    report.tables.push(trajectories.clone());
    let mut pairs = Table::new("seed_baseline_pairs", &["retain_a", "retain_b", "fade"]);
    for &(i, j, f) in &run.baseline_pairs {
        pairs.push(vec![i.into(), j.into(), f.into()]);
    }
    report.tables.push(pairs);
    report.annotations.push(
        "FADE compares each unlearned model with retain model 0 on the forget questions; forget quality compares truth ratios of the forget items under the same two models".into(),
    );
    let truncated: usize = run.points.iter().map(|p| p.truncated).sum();
    if truncated > 0 {
        report.warnings.push(format!(
            "{truncated} sampled answers reached max_new_tokens without EOS and were scored as truncated prefixes"
        ));
    }
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            let name = format!("report.{}", args.format.extension());
            emit(Some(&dir.join(name)), &report.render(args.format))?;
            emit(Some(&dir.join("trajectories.csv")), &trajectories.to_csv())
        }
        None => emit(None, &report.render(args.format)),
    }
}

fn validate(args: &Args, a: &ValidateArgs) -> Result<Report> {
    let mut report = Report::new(
        "Record file validation",
        provenance(args, &[&a.records], false)?,
        json!({ "records": a.records.display().to_string(), "kind": a.kind.as_str() }),
    );
    let count = format::validate_file(&a.records, a.kind).map_err(|e| CliError::ingest(&a.records, e))?;
    report.metric("kind", a.kind.as_str());
    report.metric("records", count);
    report.metric("valid", true);
    Ok(report)
}
