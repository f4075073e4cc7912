//! CSV output with a run header and the JSON sidecar.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use confcurve::cd::{equi_tailed_interval, level_set_region};
use confcurve::{CdGrid, ConfidenceCurve};
use serde::Serialize;

pub const REPORT_LEVELS: [f64; 2] = [0.90, 0.95];

#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub draws_per_point: usize,
    pub max_standard_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct Sidecar {
    pub command: String,
    pub seed: Option<u64>,
    pub tolerances: BTreeMap<String, f64>,
    pub point_estimate: Option<f64>,
    pub intervals: BTreeMap<String, Vec<(f64, f64)>>,
    pub monte_carlo: Option<McSummary>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    pub details: serde_json::Value,
}

impl Sidecar {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            seed,
            details: serde_json::Value::Null,
            ..Self::default()
        }
    }

    /// Equi-tailed intervals from a CD. Levels the grid cannot reach are
    /// reported as warnings.
    pub fn cd_intervals(&mut self, cd: &CdGrid) -> Result<()> {
        self.point_estimate = Some(cd.median()?);
        for level in REPORT_LEVELS {
            match equi_tailed_interval(cd, level) {
                Ok(r) => {
                    self.intervals.insert(format!("{level:.2}"), r.segments);
                }
                Err(e) => self.warnings.push(format!("no {level:.2} interval on this grid: {e}")),
            }
        }
        Ok(())
    }

    /// Level sets of a confidence curve.
    pub fn cc_intervals(&mut self, cc: &ConfidenceCurve) -> Result<()> {
        self.point_estimate = Some(cc.point_estimate());
        for level in REPORT_LEVELS {
            let r = level_set_region(cc, level)?;
            self.intervals.insert(format!("{level:.2}"), r.segments);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub fn header(command: &str, seed: Option<u64>) -> String {
    match seed {
        Some(s) => format!("# confcurve {command} seed={s}\n"),
        None => format!("# confcurve {command}\n"),
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Where a command's CSV and sidecar go.
#[derive(Debug, Clone)]
pub struct Destination {
    pub csv: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
}

impl Destination {
    pub fn new(out: Option<PathBuf>, sidecar: Option<PathBuf>) -> Self {
        let sidecar = sidecar.or_else(|| out.as_ref().map(|p| p.with_extension("json")));
        Self { csv: out, sidecar }
    }

    pub fn emit(&self, csv: &str, sidecar: &Sidecar) -> Result<()> {
        match &self.csv {
            Some(p) => write_file(p, csv)?,
            None => print!("{csv}"),
        }
        if let Some(p) = &self.sidecar {
            write_file(p, &sidecar.to_json()?)?;
        }
        Ok(())
    }
}
