//! One experiment per value of a dotted config parameter.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Overrides};
use crate::experiment::execute;
use crate::report::{sha256_hex, ExperimentReport};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: String,
    pub slope: f64,
    pub stderr: f64,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub parameter: String,
    pub config_hash: String,
    pub points: Vec<SweepPoint>,
}

/// Parses a command-line value as a TOML literal, falling back to a string.
pub fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Replaces the value at the dotted `path`, which must already exist.
pub fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("parameter `{path}`: `{}` is not a table", parts[..k].join("."))))?;
        let slot = table
            .get_mut(*part)
            .ok_or_else(|| CliError::Config(format!("parameter `{path}` is not present in the config")))?;
        if k + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
    }
    Err(CliError::Config("empty parameter path".into()))
}

/// Runs the config once per value; point `k` uses seed `seed + k` and the
/// subdirectory `point_k`. Writes `sweep.csv` (`value,slope,stderr`) and
/// `sweep.json` into the output directory. Points without a fitted rate get
/// `NaN`.
pub fn sweep(path: &Path, parameter: &str, values: &[String], overrides: &Overrides) -> Result<SweepReport, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
    let root: toml::Value = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let hash = sha256_hex(&bytes);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut configs = Vec::new();
    for raw in values {
        let mut v = root.clone();
        set_path(&mut v, parameter, parse_value(raw))?;
        let mut cfg = ExperimentConfig::from_value(v)?;
        cfg.apply(overrides);
        cfg.validate()?;
        configs.push(cfg);
    }
    let out = configs[0].resolved_out_dir();
    for (k, cfg) in configs.iter_mut().enumerate() {
        cfg.seed = cfg.seed.wrapping_add(k as u64);
        cfg.out_dir = Some(out.join(format!("point_{k}")));
    }

    let reports: Vec<ExperimentReport> =
        configs.par_iter().map(|cfg| execute(cfg, &base, &hash)).collect::<Result<_, _>>()?;
    let mut points = Vec::new();
    let mut csv = String::from("value,slope,stderr\n");
    for (raw, report) in values.iter().zip(reports) {
        let (slope, stderr) = report.rates.first().map_or((f64::NAN, f64::NAN), |r| (r.slope, r.stderr));
        let _ = writeln!(csv, "{raw},{slope},{stderr}");
        points.push(SweepPoint { value: raw.clone(), slope, stderr, report });
    }
    let sweep = SweepReport { parameter: parameter.to_string(), config_hash: hash, points };
    let p = out.join("sweep.csv");
    std::fs::write(&p, csv).map_err(CliError::io(&p))?;
    let json = serde_json::to_string_pretty(&sweep).map_err(|e| CliError::Runtime(e.to_string()))?;
    let p = out.join("sweep.json");
    std::fs::write(&p, json + "\n").map_err(CliError::io(&p))?;
    Ok(sweep)
}
