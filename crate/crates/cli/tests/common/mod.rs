#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fade_core::format::write_jsonl;
use fade_core::lm::{make_synthetic_tofu, TabularLM, TofuWorldConfig};
use fade_core::{LikelihoodRecord, ModelTag, SeedStream};
use rand::Rng;
use serde_json::Value;

pub const BERNOULLI_JEFFREYS: f64 = 0.274653;

pub fn fade_kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fade-kit"))
        .args(args)
        .env_remove("FADE_KIT_SEED")
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Run with `--format structured` and return the parsed report.
pub fn structured(args: &[&str]) -> Value {
    let mut full = args.to_vec();
    full.extend(["--format", "structured"]);
    let out = fade_kit(&full);
    assert!(out.status.success(), "{:?} failed: {}", args, stderr(&out));
    serde_json::from_slice(&out.stdout).unwrap()
}

pub fn metric<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["name"] == name)
        .map(|m| &m["value"])
        .unwrap_or_else(|| panic!("metric {name} missing"))
}

pub fn table<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["tables"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["name"] == name)
        .unwrap_or_else(|| panic!("table {name} missing"))
}

pub fn column(table: &Value, name: &str) -> Vec<Value> {
    let idx = table["columns"]
        .as_array()
        .unwrap()
        .iter()
        .position(|c| c == name)
        .unwrap();
    table["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r[idx].clone())
        .collect()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn write_records(path: &Path, records: &[LikelihoodRecord]) {
    let mut buf = b"{\"schema_version\":1,\"kind\":\"llm_likelihoods\"}\n".to_vec();
    write_jsonl(&mut buf, records).unwrap();
    std::fs::write(path, buf).unwrap();
}

pub fn write_lines(path: &Path, lines: &[String]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

/// Records for `prompts` prompts with identical likelihoods under both models.
pub fn identical_records(prompts: usize, per_direction: usize) -> Vec<LikelihoodRecord> {
    let mut out = Vec::new();
    for p in 0..prompts {
        for i in 0..per_direction {
            let x = -0.5 - (p * 7 + i) as f64 * 0.3;
            out.push(LikelihoodRecord::new(
                format!("q{p}"),
                format!("r{i}"),
                ModelTag::Retain,
                x,
                x,
            ));
            out.push(LikelihoodRecord::new(
                format!("q{p}"),
                format!("u{i}"),
                ModelTag::Unlearned,
                x - 1.0,
                x - 1.0,
            ));
        }
    }
    out
}

/// Bernoulli(0.5) against Bernoulli(0.75) samples, `n` per direction.
pub fn bernoulli_records(n: usize, seed: u64) -> Vec<LikelihoodRecord> {
    let p = [0.5, 0.5];
    let q = [0.25, 0.75];
    let mut rng = SeedStream::new(seed).rng(0);
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        for (origin, dist) in [(ModelTag::Retain, p), (ModelTag::Unlearned, q)] {
            let x = usize::from(rng.random::<f64>() >= dist[0]);
            out.push(LikelihoodRecord::new(
                "coin",
                format!("{}{i}", &origin.as_str()[..1]),
                origin,
                p[x].ln(),
                q[x].ln(),
            ));
        }
    }
    out
}

pub fn truth_ratio_lines(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| format!("{{\"value\":{v}}}")).collect()
}

/// A small trained model plus its QA items, written as model JSON and item JSONL.
pub fn write_model_and_items(dir: &Path) -> (PathBuf, PathBuf) {
    let config = TofuWorldConfig {
        n_profiles: 10,
        qa_per_profile: 5,
        ..TofuWorldConfig::default()
    };
    let world = make_synthetic_tofu(&mut SeedStream::new(1).rng(0), &config).unwrap();
    let model = TabularLM::train(&world.items, world.vocab, 2, 0.1).unwrap();
    let model_path = dir.join("model.json");
    std::fs::write(&model_path, serde_json::to_string(&model).unwrap()).unwrap();
    let items_path = dir.join("items.jsonl");
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &world.items).unwrap();
    std::fs::write(&items_path, buf).unwrap();
    (model_path, items_path)
}
