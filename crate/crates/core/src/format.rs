//! Line-delimited JSON record files and their streaming validation.
//!
//! Three kinds of file are understood:
//!
//! | kind              | fields                                                              |
//! |-------------------|---------------------------------------------------------------------|
//! | `llm_likelihoods` | `prompt_id, sample_id, origin, logp_retain, logp_unlearned, length` |
//! | `diffusion_trace` | `sample_id, origin, t, mse_retain, mse_unlearned, gamma`            |
//! | `truth_ratios`    | `value`                                                             |
//!
//! A file may start with a header line `{"schema_version": 1, "kind": "..."}`;
//! without one the caller's expected kind is assumed. Unknown fields are
//! rejected, which also rejects files mixing kinds.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::diffusion::TraceRow;
use crate::record::{LikelihoodRecord, ModelTag};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    LlmLikelihoods,
    DiffusionTrace,
    TruthRatios,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::LlmLikelihoods => "llm_likelihoods",
            RecordKind::DiffusionTrace => "diffusion_trace",
            RecordKind::TruthRatios => "truth_ratios",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm_likelihoods" => Ok(RecordKind::LlmLikelihoods),
            "diffusion_trace" => Ok(RecordKind::DiffusionTrace),
            "truth_ratios" => Ok(RecordKind::TruthRatios),
            other => Err(format!("unknown record kind `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("line {line}: duplicate record {key}")]
    DuplicateRecord { line: usize, key: String },
    #[error("file contains no records")]
    EmptyDataset,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl IngestError {
    /// Line number of a validation failure, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::SchemaViolation { line, .. } | IngestError::DuplicateRecord { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// A single truth-ratio sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRatioRecord {
    pub value: f64,
}

/// A record type with a line-level schema.
pub trait Schema: Sized {
    const KIND: RecordKind;
    fn parse(fields: &mut Fields<'_>) -> Result<Self, String>;
    /// Identity used for duplicate detection, if the kind has one.
    fn identity(&self) -> Option<String> {
        None
    }
}

/// Typed access to the fields of one JSON object, tracking which were used.
pub struct Fields<'a> {
    map: &'a Map<String, Value>,
    used: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    fn raw(&mut self, name: &'static str) -> Result<&'a Value, String> {
        self.used.push(name);
        self.map.get(name).ok_or_else(|| format!("missing field `{name}`"))
    }

    pub fn string(&mut self, name: &'static str) -> Result<String, String> {
        match self.raw(name)? {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            Value::String(_) => Err(format!("field `{name}` is empty")),
            _ => Err(format!("field `{name}` must be a string")),
        }
    }

    pub fn number(&mut self, name: &'static str) -> Result<f64, String> {
        match self.raw(name)?.as_f64() {
            Some(v) if v.is_finite() => Ok(v),
            _ => Err(format!("field `{name}` must be a finite number")),
        }
    }

    pub fn integer(&mut self, name: &'static str) -> Result<u64, String> {
        self.raw(name)?
            .as_u64()
            .ok_or_else(|| format!("field `{name}` must be a non-negative integer"))
    }

    pub fn optional_integer(&mut self, name: &'static str) -> Result<Option<u64>, String> {
        if matches!(self.map.get(name), None | Some(Value::Null)) {
            self.used.push(name);
            return Ok(None);
        }
        self.integer(name).map(Some)
    }

    pub fn origin(&mut self) -> Result<ModelTag, String> {
        let s = self.string("origin")?;
        s.parse().map_err(|e: String| format!("field `origin`: {e}"))
    }

    fn finish(self) -> Result<(), String> {
        match self.map.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(format!("unexpected field `{k}`")),
            None => Ok(()),
        }
    }
}

impl Schema for LikelihoodRecord {
    const KIND: RecordKind = RecordKind::LlmLikelihoods;

    fn parse(f: &mut Fields<'_>) -> Result<Self, String> {
        let prompt_id = f.string("prompt_id")?;
        let sample_id = f.string("sample_id")?;
        let origin = f.origin()?;
        let logp_retain = f.number("logp_retain")?;
        let logp_unlearned = f.number("logp_unlearned")?;
        for (name, v) in [("logp_retain", logp_retain), ("logp_unlearned", logp_unlearned)] {
            if v > 0.0 {
                return Err(format!(
                    "field `{name}` is a sequence log-likelihood and must be <= 0, got {v}"
                ));
            }
        }
        let length = f.optional_integer("length")?;
        Ok(LikelihoodRecord {
            prompt_id,
            sample_id,
            origin,
            logp_retain,
            logp_unlearned,
            length,
        })
    }

    fn identity(&self) -> Option<String> {
        Some(format!(
            "(prompt_id={:?}, sample_id={:?}, origin={})",
            self.prompt_id, self.sample_id, self.origin
        ))
    }
}

impl Schema for TraceRow {
    const KIND: RecordKind = RecordKind::DiffusionTrace;

    fn parse(f: &mut Fields<'_>) -> Result<Self, String> {
        let sample_id = f.string("sample_id")?;
        let origin = f.origin()?;
        let t = f.integer("t")?;
        if t < 2 {
            return Err(format!("field `t` must be at least 2, got {t}"));
        }
        let mse_retain = f.number("mse_retain")?;
        let mse_unlearned = f.number("mse_unlearned")?;
        for (name, v) in [("mse_retain", mse_retain), ("mse_unlearned", mse_unlearned)] {
            if v < 0.0 {
                return Err(format!("field `{name}` must be non-negative, got {v}"));
            }
        }
        let gamma = f.number("gamma")?;
        if gamma <= 0.0 {
            return Err(format!("field `gamma` must be positive, got {gamma}"));
        }
        Ok(TraceRow {
            sample_id,
            origin,
            t: t as usize,
            mse_retain,
            mse_unlearned,
            gamma,
        })
    }
}

impl Schema for TruthRatioRecord {
    const KIND: RecordKind = RecordKind::TruthRatios;

    fn parse(f: &mut Fields<'_>) -> Result<Self, String> {
        let value = f.number("value")?;
        if value <= 0.0 {
            return Err(format!("field `value` must be positive, got {value}"));
        }
        Ok(TruthRatioRecord { value })
    }
}

/// Streaming reader: one line in memory at a time, plus a 128-bit digest per
/// record identity for duplicate detection.
pub struct RecordReader<R, T> {
    lines: io::Lines<R>,
    line_no: usize,
    yielded: usize,
    seen: HashSet<u128>,
    finished: bool,
    _kind: std::marker::PhantomData<T>,
}

impl<R: BufRead, T: Schema> RecordReader<R, T> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            yielded: 0,
            seen: HashSet::new(),
            finished: false,
            _kind: std::marker::PhantomData,
        }
    }

    fn parse_line(&mut self, text: &str) -> Result<Option<T>, IngestError> {
        let line = self.line_no;
        let violation = |message: String| IngestError::SchemaViolation { line, message };
        let value: Value = serde_json::from_str(text).map_err(|e| violation(format!("invalid JSON: {e}")))?;
        let map = value
            .as_object()
            .ok_or_else(|| violation("expected a JSON object".into()))?;
        if line == 1 && map.contains_key("schema_version") {
            check_header(map, T::KIND).map_err(violation)?;
            return Ok(None);
        }
        let mut fields = Fields { map, used: Vec::new() };
        let record = T::parse(&mut fields).map_err(violation)?;
        fields.finish().map_err(violation)?;
        if let Some(key) = record.identity() {
            if !self.seen.insert(digest(&key)) {
                return Err(IngestError::DuplicateRecord { line, key });
            }
        }
        Ok(Some(record))
    }
}

impl<R: BufRead, T: Schema> Iterator for RecordReader<R, T> {
    type Item = Result<T, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        loop {
            let text = match self.lines.next() {
                Some(Ok(text)) => text,
                Some(Err(e)) => {
                    self.finished = true;
                    return Some(Err(e.into()));
                }
                None => {
                    self.finished = true;
                    return (self.yielded == 0).then_some(Err(IngestError::EmptyDataset));
                }
            };
            self.line_no += 1;
            if text.trim().is_empty() {
                continue;
            }
            match self.parse_line(&text) {
                Ok(Some(record)) => {
                    self.yielded += 1;
                    return Some(Ok(record));
                }
                Ok(None) => continue,
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

fn check_header(map: &Map<String, Value>, expected: RecordKind) -> Result<(), String> {
    let version = map.get("schema_version").and_then(Value::as_u64);
    if version != Some(SCHEMA_VERSION as u64) {
        return Err(format!("unsupported schema_version (expected {SCHEMA_VERSION})"));
    }
    match map.get("kind").and_then(Value::as_str) {
        Some(k) if k == expected.as_str() => {}
        Some(k) => return Err(format!("file declares kind `{k}` but `{expected}` was expected")),
        None => return Err("header is missing field `kind`".into()),
    }
    if let Some(k) = map.keys().find(|k| !matches!(k.as_str(), "schema_version" | "kind")) {
        return Err(format!("unexpected header field `{k}`"));
    }
    Ok(())
}

fn digest(key: &str) -> u128 {
    let half = |salt: u8| {
        let mut h = DefaultHasher::new();
        salt.hash(&mut h);
        key.hash(&mut h);
        h.finish() as u128
    };
    (half(0) << 64) | half(1)
}

/// Open `path` and stream its records of kind `T`.
pub fn ingest<T: Schema>(path: &Path) -> Result<RecordReader<BufReader<File>, T>, IngestError> {
    Ok(RecordReader::new(BufReader::new(File::open(path)?)))
}

/// Read every record of a file into memory.
pub fn read_all<T: Schema>(path: &Path) -> Result<Vec<T>, IngestError> {
    ingest(path)?.collect()
}

/// Count the records of a file without keeping them.
pub fn validate_file(path: &Path, kind: RecordKind) -> Result<usize, IngestError> {
    fn count<T: Schema>(path: &Path) -> Result<usize, IngestError> {
        let mut n = 0;
        for r in ingest::<T>(path)? {
            r?;
            n += 1;
        }
        Ok(n)
    }
    match kind {
        RecordKind::LlmLikelihoods => count::<LikelihoodRecord>(path),
        RecordKind::DiffusionTrace => count::<TraceRow>(path),
        RecordKind::TruthRatios => count::<TruthRatioRecord>(path),
    }
}

/// Write one JSON document per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, records: impl IntoIterator<Item = T>) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Write `contents` to `path` through a temporary file in the same directory
/// followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}
