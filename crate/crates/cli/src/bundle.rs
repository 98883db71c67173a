//! Result bundles: `results.json`, one CSV per table and one SVG per curve.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use zdmix_core::EstimateWithCI;

use crate::svg::Chart;
use crate::CliError;

pub const RESULTS: &str = "results.json";

/// A Monte Carlo estimate with its standard error, or an exact value.
pub fn est(e: &EstimateWithCI) -> Value {
    if e.n_samples == 0 && e.stderr == 0.0 {
        exact(e.value)
    } else {
        json!({ "value": e.value, "stderr": e.stderr })
    }
}

pub fn exact(v: f64) -> Value {
    json!({ "value": v, "exact": true })
}

pub fn with_se(v: f64, se: f64) -> Value {
    json!({ "value": v, "stderr": se })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    /// Hard verdicts decide the exit code; soft ones are reported only.
    pub hard: bool,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn hard(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            hard: true,
            pass,
            detail: detail.into(),
        }
    }

    pub fn soft(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            hard: false,
            ..Self::hard(name, pass, detail)
        }
    }
}

pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub struct Plot {
    pub name: String,
    pub chart: Chart,
}

#[derive(Default)]
pub struct Outcome {
    pub verdicts: Vec<Verdict>,
    pub results: Value,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Build {
    pub version: String,
    pub git_describe: String,
}

impl Build {
    pub fn current() -> Self {
        Build {
            version: env!("CARGO_PKG_VERSION").into(),
            git_describe: env!("ZDMIX_GIT_DESCRIBE").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub workers: usize,
}

/// The contents of `results.json`. `timing` comes last and is the only
/// field that may differ between runs of the same config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub experiment: String,
    pub status: Status,
    pub build: Build,
    pub config: Value,
    pub verdicts: Vec<Verdict>,
    pub results: Value,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
    pub timing: Timing,
}

impl Results {
    pub fn status_of(verdicts: &[Verdict]) -> Status {
        if verdicts.iter().all(|v| v.pass || !v.hard) {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

pub fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &outcome.tables {
        let name = format!("{}.csv", t.name);
        let mut w = csv::Writer::from_path(dir.join(&name)).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_record(&t.header).map_err(|e| CliError::Io(e.to_string()))?;
        for row in &t.rows {
            w.write_record(row).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush()?;
        files.push(name);
    }
    for p in &outcome.plots {
        let name = format!("{}.svg", p.name);
        std::fs::write(dir.join(&name), p.chart.render())?;
        files.push(name);
    }
    Ok(files)
}

pub fn write_results(dir: &Path, results: &Results) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(results).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(dir.join(RESULTS), text + "\n")?;
    Ok(())
}

/// Every bundle under `dir`: `dir` itself and its immediate subdirectories.
pub fn find_bundles(dir: &Path) -> Result<Vec<(PathBuf, Results)>, CliError> {
    let mut paths = Vec::new();
    if dir.join(RESULTS).is_file() {
        paths.push(dir.join(RESULTS));
    }
    if let Ok(entries) = std::fs::read_dir(dir) {
        let mut subdirs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
        subdirs.sort();
        paths.extend(subdirs.into_iter().map(|d| d.join(RESULTS)).filter(|p| p.is_file()));
    }
    if paths.is_empty() {
        return Err(CliError::MissingBundle(dir.to_path_buf()));
    }
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)?;
            let r = serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok((p, r))
        })
        .collect()
}
