//! Executes one experiment configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use consensus_lab::analysis::{compare_log_vs_power, consensus_stats, default_window, fit_rate, RateFit};
use consensus_lab::dynamics::{exact_second_moment, monte_carlo_v, run_with, McConfig, McSummary};
use consensus_lab::manet::{run_manet_with, state_range, ManetRun};
use consensus_lab::suites::{run_suite, Suite};
use consensus_lab::topology::{minimal_delta, verify_a1, TopologyProcess};
use consensus_lab::{GainSchedule, NoiseKind, NoiseModel};
use rayon::prelude::*;

use crate::config::{config_err, ExperimentConfig, ExperimentKind, Overrides, TopologyConfig};
use crate::plot::{emit_plot, PlotKind};
use crate::report::{sha256_hex, Artifacts, CheckEntry, ExperimentReport, Quantity, RateEntry};
use crate::CliError;

/// Reads, validates and runs the configuration at `path`. Relative paths in
/// the config resolve against its directory.
pub fn run_experiment(path: &Path, overrides: &Overrides) -> Result<ExperimentReport, CliError> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.apply(overrides);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    execute(&cfg, &base, &sha256_hex(&bytes))
}

/// Runs every lemma suite with `cases` cases each.
pub fn verify_all(cases: usize, overrides: &Overrides) -> Result<ExperimentReport, CliError> {
    let text = format!("kind = \"verify_suite\"\nhorizon = 2\n\n[suite]\ncases = {cases}\n");
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.apply(overrides);
    execute(&cfg, Path::new("."), &sha256_hex(text.as_bytes()))
}

struct Protocol {
    process: TopologyProcess,
    gains: GainSchedule,
    noise: NoiseModel,
    x1: Vec<f64>,
}

impl Protocol {
    fn build(cfg: &ExperimentConfig, base: &Path) -> Result<Protocol, CliError> {
        let topo = cfg.topology.as_ref().ok_or_else(|| CliError::Config("at `topology`: missing".into()))?;
        let gain = cfg.gain.as_ref().ok_or_else(|| CliError::Config("at `gain`: missing".into()))?;
        let n = topo.n(base)?;
        let gains = gain.build(n, topo.delta())?;
        let process = topo.build(base, &gains, cfg.horizon, cfg.seed)?;
        let x1 = match &cfg.x1 {
            Some(x) if x.len() != n => {
                return Err(CliError::Config(format!("at `x1`: has {} entries, topology has {n} agents", x.len())))
            }
            Some(x) => x.clone(),
            None => (0..n).map(|i| i as f64).collect(),
        };
        Ok(Protocol { process, gains, noise: cfg.noise.clone().unwrap_or_else(NoiseModel::zero), x1 })
    }

    fn monte_carlo(&self, cfg: &ExperimentConfig, default_replicas: usize) -> Result<McSummary, CliError> {
        Ok(monte_carlo_v(&McConfig {
            process: self.process.clone(),
            gains: self.gains.clone(),
            noise: self.noise.clone(),
            x1: self.x1.clone(),
            horizon: cfg.horizon,
            replicas: cfg.replicas_or(default_replicas).max(2),
            seed: cfg.seed,
            record: cfg.record_plan(),
        })?)
    }
}

fn rate_entry(name: &str, fit: &RateFit, expected: Option<f64>) -> RateEntry {
    RateEntry { name: name.into(), slope: fit.slope, stderr: fit.stderr_slope, window: fit.window, points: fit.points, expected }
}

fn quantity(name: &str, value: f64, stderr: Option<f64>) -> Quantity {
    Quantity { name: name.into(), value, stderr }
}

fn window(cfg: &ExperimentConfig) -> (f64, f64) {
    cfg.fit.window.unwrap_or_else(|| default_window(cfg.horizon))
}

/// Fits `series` or records why it could not.
fn try_fit(report: &mut ExperimentReport, name: &str, series: &[(f64, f64)], w: (f64, f64), expected: Option<f64>) {
    match fit_rate(series, w) {
        Ok(fit) => report.rates.push(rate_entry(name, &fit, expected)),
        Err(e) => report.notes.push(format!("no {name} fit on [{}, {}]: {e}", w.0, w.1)),
    }
}

fn plot(art: &mut Artifacts, csv: &str, kind: PlotKind, name: &str, title: &str) -> Result<(), CliError> {
    let svg = emit_plot(csv, kind, title, Some(&art.provenance()))?;
    art.svg(name, &svg)
}

pub fn execute(cfg: &ExperimentConfig, base: &Path, hash: &str) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let started = Instant::now();
    let out_dir = cfg.resolved_out_dir();
    let mut art = Artifacts::new(&out_dir, hash)?;
    let mut report = ExperimentReport {
        experiment: cfg.kind.name().into(),
        config_hash: hash.into(),
        seed: cfg.seed,
        horizon: cfg.horizon,
        replicas: cfg.replicas,
        out_dir: out_dir.clone(),
        csv: vec![],
        svg: vec![],
        rates: vec![],
        checks: vec![],
        quantities: vec![],
        notes: vec![],
        wall_time_s: 0.0,
    };
    match cfg.kind {
        ExperimentKind::ProtocolRun => protocol_run(cfg, base, &mut art, &mut report)?,
        ExperimentKind::MonteCarlo => monte_carlo(cfg, base, &mut art, &mut report)?,
        ExperimentKind::RateStudy => rate_study(cfg, base, &mut art, &mut report)?,
        ExperimentKind::AdversarialStudy => adversarial_study(cfg, base, &mut art, &mut report)?,
        ExperimentKind::RandomTopologyStudy => random_topology_study(cfg, base, &mut art, &mut report)?,
        ExperimentKind::ManetStudy => manet_study(cfg, &mut art, &mut report)?,
        ExperimentKind::VerifySuite => verify_suite(cfg, &mut art, &mut report)?,
    }
    report.wall_time_s = started.elapsed().as_secs_f64();
    art.finish(report)
}

fn protocol_run(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts, report: &mut ExperimentReport) -> Result<(), CliError> {
    let p = Protocol::build(cfg, base)?;
    let trace = run_with(&p.process, &p.gains, &p.noise, &p.x1, cfg.horizon, cfg.seed, &cfg.record_plan(), false)?;
    let csv = trace.to_csv();
    art.csv("trace.csv", &csv)?;
    if cfg.plots {
        plot(art, &csv, PlotKind::States, "states.svg", "agent states")?;
        plot(art, &csv, PlotKind::LoglogV, "V.svg", "disagreement V")?;
    }
    let series: Vec<(f64, f64)> = trace.times.iter().map(|&t| t as f64).zip(trace.disagreement.iter().copied()).collect();
    try_fit(report, "V", &series, window(cfg), None);
    report.quantities.push(quantity("final_V", *trace.disagreement.last().unwrap_or(&f64::NAN), None));
    report.quantities.push(quantity("final_average", trace.consensus_value(), None));
    report.quantities.push(quantity("initial_average", p.x1.iter().sum::<f64>() / p.x1.len() as f64, None));
    Ok(())
}

/// Shared Monte Carlo part: writes `mc.csv` and the V chart, fits the rate.
fn mc_common(
    cfg: &ExperimentConfig,
    p: &Protocol,
    art: &mut Artifacts,
    report: &mut ExperimentReport,
    expected: Option<f64>,
) -> Result<McSummary, CliError> {
    let s = p.monte_carlo(cfg, 100)?;
    let csv = s.to_csv();
    art.csv("mc.csv", &csv)?;
    if cfg.plots {
        plot(art, &csv, PlotKind::LoglogV, "V.svg", "mean disagreement")?;
    }
    try_fit(report, "meanV", &s.series(), window(cfg), expected);
    report.quantities.push(quantity(
        "final_meanV",
        *s.mean_v.last().unwrap_or(&f64::NAN),
        s.stderr_v.last().copied(),
    ));
    Ok(s)
}

fn unbiasedness(report: &mut ExperimentReport, s: &McSummary, x1: &[f64]) -> Result<(), CliError> {
    let st = consensus_stats(&s.final_states, x1)?;
    report.quantities.push(quantity("consensus_mean", st.mean_final, Some(st.stderr_mean())));
    report.quantities.push(quantity("consensus_variance", st.var_final, None));
    report.checks.push(CheckEntry {
        name: "unbiased_within_4se".into(),
        lhs: (st.mean_final - st.target_average).abs(),
        rhs: 4.0 * st.stderr_mean(),
        holds: st.unbiased_within(4.0),
    });
    Ok(())
}

fn monte_carlo(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts, report: &mut ExperimentReport) -> Result<(), CliError> {
    let p = Protocol::build(cfg, base)?;
    let s = mc_common(cfg, &p, art, report, None)?;
    unbiasedness(report, &s, &p.x1)
}

fn rate_study(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts, report: &mut ExperimentReport) -> Result<(), CliError> {
    let p = Protocol::build(cfg, base)?;
    let s = mc_common(cfg, &p, art, report, None)?;
    let w = window(cfg);
    match compare_log_vs_power(&s.series(), w) {
        Ok(cmp) => {
            report.quantities.push(quantity("power_sse", cmp.power.sse, None));
            report.quantities.push(quantity("inverse_log_sse", cmp.inverse_log_sse, None));
            report.quantities.push(quantity("log_exponent", cmp.log_exponent, None));
        }
        Err(e) => report.notes.push(format!("no log/power comparison: {e}")),
    }
    let exact_ok = p.process.is_deterministic() && !matches!(p.noise.kind, NoiseKind::MovingAverage { .. });
    if exact_ok {
        let exact = exact_second_moment(&p.process, &p.gains, &p.noise, &p.x1, cfg.horizon)?;
        let mut csv = String::from("t,EV\n");
        let mut worst: f64 = 0.0;
        for (k, &t) in s.times.iter().enumerate() {
            let _ = writeln!(csv, "{t},{}", exact[t - 1]);
            let tol = 4.0 * s.stderr_v[k] + 1e-12;
            worst = worst.max((s.mean_v[k] - exact[t - 1]).abs() / tol);
        }
        art.csv("exact.csv", &csv)?;
        report.checks.push(CheckEntry { name: "mc_matches_exact".into(), lhs: worst, rhs: 1.0, holds: worst <= 1.0 });
    } else {
        report.notes.push("exact second moment skipped: random topology or moving-average noise".into());
    }
    Ok(())
}

fn adversarial_study(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts, report: &mut ExperimentReport) -> Result<(), CliError> {
    let (delta, c) = match &cfg.topology {
        Some(TopologyConfig::Adversarial { delta, c, .. }) => (*delta, *c),
        _ => return Err(CliError::Config("at `topology.kind`: adversarial_study needs an adversarial topology".into())),
    };
    let p = Protocol::build(cfg, base)?;
    let expected = (delta < 0.5).then(|| -(1.0 - 2.0 * delta));
    mc_common(cfg, &p, art, report, expected)?;
    let trace = p.process.trace(cfg.horizon)?;
    let verdict = verify_a1(&trace, delta, c)?;
    report.checks.push(CheckEntry {
        name: "a1_holds".into(),
        lhs: verdict.witness.as_ref().map_or(0.0, |w| w.times.len() as f64),
        rhs: 1.0,
        holds: verdict.holds,
    });
    match minimal_delta(&trace, c) {
        Ok(d) => report.quantities.push(quantity("minimal_delta", d, None)),
        Err(e) => report.notes.push(format!("minimal delta: {e}")),
    }
    report.quantities.push(quantity("delta", delta, None));
    Ok(())
}

fn random_topology_study(
    cfg: &ExperimentConfig,
    base: &Path,
    art: &mut Artifacts,
    report: &mut ExperimentReport,
) -> Result<(), CliError> {
    let mu = match &cfg.topology {
        Some(TopologyConfig::RandomA1prime { mu, .. }) => *mu,
        _ => {
            return Err(CliError::Config(
                "at `topology.kind`: random_topology_study needs a random_a1prime topology".into(),
            ))
        }
    };
    let p = Protocol::build(cfg, base)?;
    let s = mc_common(cfg, &p, art, report, Some(-(1.0 - 2.0 * mu)))?;
    unbiasedness(report, &s, &p.x1)
}

fn manet_study(cfg: &ExperimentConfig, art: &mut Artifacts, report: &mut ExperimentReport) -> Result<(), CliError> {
    let (scene, preset_gain) = cfg.scene.as_ref().ok_or_else(|| CliError::Config("at `scene`: missing".into()))?.build()?;
    let gains = match (&cfg.gain, preset_gain) {
        (Some(g), _) => g.build(scene.n(), None)?,
        (None, Some(g)) => g,
        (None, None) => return Err(CliError::Config("at `gain`: required without a scene preset".into())),
    };
    gains.validate().map_err(config_err("gain"))?;
    let seeds = cfg.replicas_or(1) as u64;
    let plan = cfg.record_plan();
    let runs: Vec<ManetRun> = (cfg.seed..cfg.seed + seeds)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&s| run_manet_with(&scene, &gains, cfg.horizon, s, &plan, false))
        .collect::<Result<_, _>>()?;

    let first = &runs[0];
    let states = first.trace.to_csv();
    art.csv("states.csv", &states)?;
    let positions = first.positions_csv();
    art.csv("positions.csv", &positions)?;

    let times = &first.trace.times;
    let r = runs.len() as f64;
    let mut mean_csv = String::from("t,meanV,stderrV,replicas\n");
    let mut series = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let vals: Vec<f64> = runs.iter().map(|run| run.trace.disagreement[k]).collect();
        let mean = vals.iter().sum::<f64>() / r;
        let se = if runs.len() > 1 {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt()
        } else {
            0.0
        };
        let _ = writeln!(mean_csv, "{t},{mean},{se},{}", runs.len());
        series.push((t as f64, mean));
    }
    art.csv("meanV.csv", &mean_csv)?;

    let mut finals_csv = String::from("seed,range,mean\n");
    let mut ranges = Vec::new();
    let mut means = Vec::new();
    for (k, run) in runs.iter().enumerate() {
        let x = run.trace.final_state();
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let _ = writeln!(finals_csv, "{},{},{m}", cfg.seed + k as u64, state_range(x));
        ranges.push(state_range(x));
        means.push(m);
    }
    art.csv("finals.csv", &finals_csv)?;

    if cfg.plots {
        plot(art, &states, PlotKind::States, "states.svg", "agent states")?;
        plot(art, &positions, PlotKind::Positions, "positions.svg", "agent positions")?;
        plot(art, &mean_csv, PlotKind::LoglogV, "V.svg", "mean disagreement")?;
    }

    try_fit(report, "meanV", &series, window(cfg), None);
    let threshold = cfg.fit.range_threshold.unwrap_or(0.05);
    let run_mean = means.iter().sum::<f64>() / r;
    let initial = scene.initial_states.iter().sum::<f64>() / scene.n() as f64;
    let agree = ranges.iter().filter(|&&g| g < threshold).count() as f64 / r;
    let mut sorted = ranges.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    report.quantities.push(quantity("final_mean", run_mean, None));
    report.quantities.push(quantity("initial_average", initial, None));
    report.quantities.push(quantity("median_final_range", median, None));
    report.quantities.push(quantity("fraction_range_below_threshold", agree, None));
    report.quantities.push(quantity("range_threshold", threshold, None));
    report.notes.push(format!(
        "final mean {run_mean:.4} against initial average {initial:.4}; {:.0}% of {} runs end with range < {threshold}",
        100.0 * agree,
        runs.len()
    ));
    Ok(())
}

fn verify_suite(cfg: &ExperimentConfig, art: &mut Artifacts, report: &mut ExperimentReport) -> Result<(), CliError> {
    let suites = cfg.suite.suites.clone().unwrap_or_else(|| Suite::ALL.to_vec());
    let mut csv = String::from("suite,cases,failures,first_failure\n");
    for (k, suite) in suites.iter().enumerate() {
        let out = run_suite(*suite, cfg.suite.cases, cfg.seed.wrapping_add(k as u64))?;
        let first = out.first_failure.clone().unwrap_or_default().replace([',', '\n'], ";");
        let _ = writeln!(csv, "{},{},{},{first}", suite.name(), out.cases, out.failures);
        report.checks.push(CheckEntry {
            name: suite.name().into(),
            lhs: out.failures as f64,
            rhs: 0.0,
            holds: out.passed(),
        });
        if let Some(f) = out.first_failure {
            report.notes.push(format!("{}: {f}", suite.name()));
        }
    }
    art.csv("suites.csv", &csv)?;
    Ok(())
}
