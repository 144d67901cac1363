use std::path::{Path, PathBuf};
use std::process::Command;

use consensus_lab_cli::plot::{chart_from_csv, PlotKind};
use consensus_lab_cli::sweep::sweep;
use consensus_lab_cli::{run_experiment, ExperimentReport, Overrides};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_consensus-lab"))
}

fn reduced(out: &Path, horizon: usize, replicas: usize) -> Overrides {
    Overrides { seed: None, out_dir: Some(out.to_path_buf()), replicas: Some(replicas), horizon: Some(horizon) }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn every_checked_in_config_runs_at_reduced_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let mut names: Vec<PathBuf> = std::fs::read_dir(configs()).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(names.len() >= 10);
    for path in names {
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let (h, r) = if stem.starts_with("fig") { (300, 3) } else { (400, 8) };
        let out = dir.path().join(&stem);
        let report = run_experiment(&path, &reduced(&out, h, r)).unwrap_or_else(|e| panic!("{stem}: {e}"));
        assert!(out.join("report.json").exists(), "{stem}");
        assert!(out.join("report.csv").exists(), "{stem}");
        for csv in &report.csv {
            assert!(out.join(csv).exists(), "{stem}: {csv}");
        }
        assert_eq!(report.config_hash.len(), 64);
    }
}

#[test]
fn fig2_preset_produces_states_and_consensus_near_half() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&configs().join("fig2.toml"), &reduced(dir.path(), 2000, 8)).unwrap();
    let states = read(&dir.path().join("states.csv"));
    assert!(states.starts_with("t,x_1,x_2,x_3,x_4,x_5,x_6,x_7,x_8,x_9,V,a\n"));
    let svg = read(&dir.path().join("states.svg"));
    assert_eq!(svg.matches("<polyline").count(), 9);
    assert!(svg.contains(&report.config_hash));
    let m = report.quantity("final_mean").unwrap();
    assert!((0.45..=0.55).contains(&m), "{m}");
    assert!(report.notes.iter().any(|n| n.starts_with("final mean")));
    let positions = read(&dir.path().join("positions.csv"));
    assert!(positions.starts_with("l,agent,px,py\n"));
}

#[test]
fn same_seed_reproduces_identical_csvs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for cfg in ["protocol.toml", "random_topology.toml", "fig3.toml"] {
        let ra = run_experiment(&configs().join(cfg), &reduced(a.path(), 300, 4)).unwrap();
        run_experiment(&configs().join(cfg), &reduced(b.path(), 300, 4)).unwrap();
        for csv in ra.csv.iter().filter(|c| *c != "report.csv") {
            assert_eq!(read(&a.path().join(csv)), read(&b.path().join(csv)), "{cfg}: {csv}");
        }
    }
}

#[test]
fn oracle_config_matches_exact_moments() {
    let dir = tempfile::tempdir().unwrap();
    let o = Overrides { out_dir: Some(dir.path().to_path_buf()), ..Overrides::default() };
    let report = run_experiment(&configs().join("oracle.toml"), &o).unwrap();
    let check = report.checks.iter().find(|c| c.name == "mc_matches_exact").unwrap();
    assert!(check.holds, "{check:?}");
    let exact = read(&dir.path().join("exact.csv"));
    assert!(exact.lines().nth(2).unwrap().starts_with("2,0.1875"));
}

#[test]
fn missing_horizon_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "kind = \"protocol_run\"\n[topology]\nkind = \"cycle_edges\"\nn = 4\n").unwrap();
    let out = bin().arg("run").arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("horizon"), "{err}");
}

#[test]
fn bad_nested_field_reports_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "kind = \"monte_carlo\"\nhorizon = 10\n[topology]\nkind = \"cycle_edges\"\nn = 4\n[gain]\nkind = \"power\"\nalpha = \"big\"\nexponent = 1.0\n",
    )
    .unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gain"), "{err}");
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bin().args(["verify", "--cases", "60", "--out-dir"]).arg(dir.path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("suites.csv").exists());

    let ok = bin().arg("verify").arg(configs().join("verify.toml")).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));

    // A suite with no cases is no evidence and counts as failing.
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "kind = \"verify_suite\"\nhorizon = 2\n[suite]\ncases = 0\nsuites = [\"lemma6\"]\n").unwrap();
    let bad = bin().arg("verify").arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("lemma6"));
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    let text = read(&configs().join("protocol.toml"));
    std::fs::write(&cfg, text).unwrap();
    let env_out = dir.path().join("from_env");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .args(["--horizon", "50"])
        .env(consensus_lab_cli::OUT_DIR_ENV, &env_out)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_out.join("trace.csv").exists());
}

#[test]
fn single_value_sweep_equals_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("adversarial.toml");
    let o_run = reduced(a.path(), 3000, 6);
    let o_sweep = reduced(b.path(), 3000, 6);
    run_experiment(&cfg, &o_run).unwrap();
    let s = sweep(&cfg, "topology.delta", &["0.3".into()], &o_sweep).unwrap();
    assert_eq!(s.points.len(), 1);
    assert_eq!(read(&a.path().join("mc.csv")), read(&b.path().join("point_0/mc.csv")));
}

#[test]
fn delta_sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let s = sweep(&configs().join("adversarial.toml"), "topology.delta", &["0".into(), "0.1".into(), "0.2".into()], &reduced(dir.path(), 2000, 6))
        .unwrap();
    let csv = read(&dir.path().join("sweep.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,slope,stderr");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("0.1,"));
    let deltas: Vec<f64> = s.points.iter().map(|p| p.report.quantity("delta").unwrap()).collect();
    assert_eq!(deltas, vec![0.0, 0.1, 0.2]);
    for p in &s.points {
        assert!(p.report.checks.iter().all(|c| c.holds), "{:?}", p.report.checks);
    }
}

#[test]
fn sweep_rejects_absent_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let e = sweep(&configs().join("adversarial.toml"), "topology.nope", &["1".into()], &reduced(dir.path(), 100, 2)).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn speed_exponent_sweep_orders_final_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let s = sweep(&configs().join("fig2.toml"), "scene.speed.b", &["1.0".into(), "0.9".into(), "0.8".into()], &reduced(dir.path(), 3000, 24))
        .unwrap();
    let medians: Vec<f64> = s.points.iter().map(|p| p.report.quantity("median_final_range").unwrap()).collect();
    assert!(medians[0] < medians[1] && medians[1] < medians[2], "{medians:?}");
}

fn report_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(&dir.join("report.json"))).unwrap()
}

#[test]
fn report_numbers_trace_to_report_csv() {
    let dir = tempfile::tempdir().unwrap();
    let r: ExperimentReport = run_experiment(&configs().join("random_topology.toml"), &reduced(dir.path(), 500, 10)).unwrap();
    let csv = read(&dir.path().join("report.csv"));
    for q in &r.quantities {
        assert!(csv.contains(&format!(",{},{}", q.name, q.value)), "{}", q.name);
    }
    let json = report_json(dir.path());
    assert_eq!(json["config_hash"].as_str().unwrap(), r.config_hash);
    assert_eq!(json["seed"].as_u64().unwrap(), 9);
}

#[test]
fn loglog_chart_of_inverse_t_is_a_slope_minus_one_line() {
    let mut csv = String::from("t,meanV,stderrV,replicas\n");
    for k in 0..=40 {
        let t = 10f64.powf(k as f64 / 10.0);
        csv.push_str(&format!("{t},{},0,1\n", 3.0 / t));
    }
    let chart = chart_from_csv(&csv, PlotKind::LoglogV, "V").unwrap();
    let svg = chart.render(None);
    let (xa, ya) = chart.axes();
    let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
    let data: Vec<(f64, f64)> = pts
        .split(' ')
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (xa.from_px(x.parse().unwrap()).log10(), ya.from_px(y.parse().unwrap()).log10())
        })
        .collect();
    let first = data[0];
    let last = *data.last().unwrap();
    let slope = (last.1 - first.1) / (last.0 - first.0);
    assert!((slope + 1.0).abs() < 1e-3, "{slope}");
    for (x, y) in &data {
        assert!((y - (first.1 - (x - first.0))).abs() < 1e-2);
    }
}

#[test]
fn plot_command_checks_schema() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pos.csv");
    std::fs::write(&csv, "l,agent,px,py\n0,1,0,0\n1,1,1,0\n0,2,0,1\n1,2,0,2\n").unwrap();
    let ok = bin().arg("plot").arg(&csv).args(["--kind", "positions"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let svg = read(&dir.path().join("pos.svg"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert_eq!(svg.matches("<circle").count(), 2);
    let bad = bin().arg("plot").arg(&csv).args(["--kind", "states"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad = bin().arg("plot").arg(&csv).args(["--kind", "loglog_V"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
