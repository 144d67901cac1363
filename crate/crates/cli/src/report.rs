//! Experiment reports and artifact bookkeeping.

use std::path::{Path, PathBuf};

use consensus_lab::analysis::{report_csv, ReportRow};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEntry {
    pub name: String,
    pub slope: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// Slope predicted by the rate theorem, when one applies.
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub horizon: usize,
    pub replicas: Option<usize>,
    pub out_dir: PathBuf,
    pub csv: Vec<String>,
    pub svg: Vec<String>,
    pub rates: Vec<RateEntry>,
    pub checks: Vec<CheckEntry>,
    pub quantities: Vec<Quantity>,
    pub notes: Vec<String>,
    pub wall_time_s: f64,
}

impl ExperimentReport {
    pub fn failed_checks(&self) -> Vec<&CheckEntry> {
        self.checks.iter().filter(|c| !c.holds).collect()
    }

    pub fn quantity(&self, name: &str) -> Option<f64> {
        self.quantities.iter().find(|q| q.name == name).map(|q| q.value)
    }

    pub fn rate(&self, name: &str) -> Option<&RateEntry> {
        self.rates.iter().find(|r| r.name == name)
    }

    /// Rows for `report.csv`; every number in `report.json` appears here.
    pub fn rows(&self) -> Vec<ReportRow> {
        let id = &self.experiment;
        let mut rows = Vec::new();
        for r in &self.rates {
            rows.push(ReportRow {
                experiment_id: id.clone(),
                quantity: format!("slope_{}", r.name),
                value: r.slope,
                stderr: Some(r.stderr),
                holds: None,
            });
            if let Some(e) = r.expected {
                rows.push(ReportRow {
                    experiment_id: id.clone(),
                    quantity: format!("expected_slope_{}", r.name),
                    value: e,
                    stderr: None,
                    holds: None,
                });
            }
        }
        for c in &self.checks {
            for (side, v) in [("lhs", c.lhs), ("rhs", c.rhs)] {
                rows.push(ReportRow {
                    experiment_id: id.clone(),
                    quantity: format!("{}_{side}", c.name),
                    value: v,
                    stderr: None,
                    holds: Some(c.holds),
                });
            }
        }
        for q in &self.quantities {
            rows.push(ReportRow { experiment_id: id.clone(), quantity: q.name.clone(), value: q.value, stderr: q.stderr, holds: None });
        }
        rows
    }
}

/// Writes artifacts into one directory and remembers their names.
pub(crate) struct Artifacts {
    pub dir: PathBuf,
    pub hash: String,
    pub csv: Vec<String>,
    pub svg: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path, hash: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Artifacts { dir: dir.to_path_buf(), hash: hash.to_string(), csv: Vec::new(), svg: Vec::new() })
    }

    fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.dir.join(name);
        std::fs::write(&p, text).map_err(CliError::io(&p))
    }

    pub fn csv(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write(name, text)?;
        self.csv.push(name.to_string());
        Ok(())
    }

    pub fn svg(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write(name, text)?;
        self.svg.push(name.to_string());
        Ok(())
    }

    pub fn provenance(&self) -> String {
        format!("config sha256 {}", self.hash)
    }

    pub fn finish(self, mut report: ExperimentReport) -> Result<ExperimentReport, CliError> {
        report.csv = self.csv;
        report.svg = self.svg;
        report.csv.push("report.csv".into());
        let rows = report_csv(&report.rows());
        let p = self.dir.join("report.csv");
        std::fs::write(&p, rows).map_err(CliError::io(&p))?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
        let p = self.dir.join("report.json");
        std::fs::write(&p, json + "\n").map_err(CliError::io(&p))?;
        Ok(report)
    }
}
