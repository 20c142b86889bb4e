//! Self-describing reports rendered as Markdown, CSV or JSON.
//!
//! Reports carry no timestamps or host details: the same invocation on the
//! same inputs renders to the same bytes.

use std::fmt::Write as _;
use std::fs::File;
use std::io;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Md,
    Csv,
    Structured,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Md => "md",
            OutputFormat::Csv => "csv",
            OutputFormat::Structured => "structured",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Md => "md",
            OutputFormat::Csv => "csv",
            OutputFormat::Structured => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> Result<Self> {
        let mut hasher = Sha256::new();
        let mut f = File::open(path).map_err(|e| CliError::io(path, e))?;
        io::copy(&mut f, &mut hasher).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: format!("{:x}", hasher.finalize()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    /// Command line that regenerates this report.
    pub invocation: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Int(i64),
    Num(f64),
    Flag(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => fmt_num(*x),
            Cell::Flag(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Flag(b)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// Shortest representation that parses back to the same double.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|c| csv_field(&c.render())).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", self.columns.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.columns.len()));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.render().replace('|', "\\|")).collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub title: String,
    pub provenance: Provenance,
    pub config: serde_json::Value,
    pub metrics: Vec<Metric>,
    pub tables: Vec<Table>,
    pub annotations: Vec<String>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(title: &str, provenance: Provenance, config: serde_json::Value) -> Self {
        Self {
            title: title.into(),
            provenance,
            config,
            metrics: Vec::new(),
            tables: Vec::new(),
            annotations: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: &str, value: impl Into<Cell>) {
        self.metrics.push(Metric {
            name: name.into(),
            value: value.into(),
        });
    }

    pub fn metric_value(&self, name: &str) -> Option<&Cell> {
        self.metrics.iter().find(|m| m.name == name).map(|m| &m.value)
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Md => self.to_markdown(),
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Structured => {
                let mut s = serde_json::to_string_pretty(self).expect("report serialises");
                s.push('\n');
                s
            }
        }
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}\n", self.title);
        let _ = writeln!(out, "## Provenance\n");
        let _ = writeln!(out, "- tool: `{}`", self.provenance.tool);
        let _ = writeln!(out, "- invocation: `{}`", self.provenance.invocation);
        if let Some(seed) = self.provenance.seed {
            let _ = writeln!(out, "- seed: `{seed}`");
        }
        for input in &self.provenance.inputs {
            let _ = writeln!(out, "- input: `{}` (sha256 `{}`)", input.path, input.sha256);
        }
        let _ = writeln!(out, "\n## Configuration\n");
        let _ = writeln!(
            out,
            "```json\n{}\n```\n",
            serde_json::to_string_pretty(&self.config).expect("config serialises")
        );
        if !self.metrics.is_empty() {
            let _ = writeln!(out, "## Results\n");
            let _ = writeln!(out, "| metric | value |\n|---|---|");
            for m in &self.metrics {
                let _ = writeln!(out, "| {} | {} |", m.name, m.value.render());
            }
            out.push('\n');
        }
        for table in &self.tables {
            let _ = writeln!(out, "## {}\n", table.name);
            out.push_str(&table.to_markdown());
            out.push('\n');
        }
        if !self.annotations.is_empty() {
            let _ = writeln!(out, "## Notes\n");
            for a in &self.annotations {
                let _ = writeln!(out, "- {a}");
            }
            out.push('\n');
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(out, "## Warnings\n");
            for w in &self.warnings {
                let _ = writeln!(out, "- {w}");
            }
            out.push('\n');
        }
        out
    }

    /// Metrics first, then each table, separated by blank lines. Lines
    /// starting with `#` carry provenance and section names.
    fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.title);
        let _ = writeln!(out, "# invocation: {}", self.provenance.invocation);
        let mut metrics = Table::new("metrics", &["metric", "value"]);
        for m in &self.metrics {
            metrics.push(vec![m.name.as_str().into(), m.value.clone()]);
        }
        out.push_str(&metrics.to_csv());
        for table in &self.tables {
            let _ = writeln!(out, "\n# {}", table.name);
            out.push_str(&table.to_csv());
        }
        out
    }
}

/// Write `contents` to `out` atomically, or to stdout when `out` is `None`.
pub fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => fade_core::format::write_atomic(path, contents.as_bytes()).map_err(|e| CliError::io(path, e)),
        None => {
            use std::io::Write;
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(contents.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}
