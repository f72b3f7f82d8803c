//! Result files. Floats are written in Rust's shortest round-trip form, so
//! identical runs produce identical bytes and values parse back exactly.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use super::{CoverageDistribution, ExperimentConfig, MetricsSummary};
use crate::error::{Error, Result};

pub const CURVE_HEADER: &str = "epsilon,success,help_step,help_trial,set_size,coverage";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epsilon: f64,
    pub success: f64,
    pub help_step: f64,
    pub help_trial: f64,
    pub set_size: f64,
    pub coverage: f64,
}

impl CurveRow {
    fn parse(line: &str) -> Result<Self> {
        let fields = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::data(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        match fields[..] {
            [epsilon, success, help_step, help_trial, set_size, coverage] => {
                Ok(Self { epsilon, success, help_step, help_trial, set_size, coverage })
            }
            _ => Err(Error::data(format!("expected 6 fields, found {}", fields.len()))),
        }
    }
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epsilon, r.success, r.help_step, r.help_trial, r.set_size, r.coverage
        );
    }
    out
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    std::fs::write(path, curve_csv(rows))?;
    Ok(())
}

/// Parses a curve table written by [`curve_csv`].
pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::data("curve table has an unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| CurveRow::parse(l).map_err(|e| Error::data(format!("row {}: {e}", i + 1))))
        .collect()
}

/// Crate version in `git describe` style.
pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

pub const RESULTS_FORMAT: &str = "askhelp-results";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub format: String,
    pub version: String,
    pub root_seed: u64,
    pub config: ExperimentConfig,
    pub summaries: Vec<MetricsSummary>,
}

impl ResultsFile {
    pub fn new(config: &ExperimentConfig, summaries: Vec<MetricsSummary>) -> Self {
        Self {
            format: RESULTS_FORMAT.to_string(),
            version: version_string(),
            root_seed: config.seed,
            config: config.clone(),
            summaries,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ResultsFile = serde_json::from_str(text)?;
        if file.format != RESULTS_FORMAT {
            return Err(Error::data(format!("unexpected results format {:?}", file.format)));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub const COVERAGE_FORMAT: &str = "askhelp-coverage";

/// A coverage distribution together with the run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageFile {
    pub format: String,
    pub version: String,
    pub root_seed: u64,
    pub config: ExperimentConfig,
    pub distribution: CoverageDistribution,
}

impl CoverageFile {
    pub fn new(config: &ExperimentConfig, distribution: CoverageDistribution) -> Self {
        Self {
            format: COVERAGE_FORMAT.to_string(),
            version: version_string(),
            root_seed: config.seed,
            config: config.clone(),
            distribution,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CoverageFile = serde_json::from_str(text)?;
        if file.format != COVERAGE_FORMAT {
            return Err(Error::data(format!("unexpected coverage format {:?}", file.format)));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
