use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use consensus_lab_cli::report::sha256_hex;
use consensus_lab_cli::{emit_plot, run_experiment, sweep, verify_all, CliError, ExperimentKind, ExperimentReport, Overrides, PlotKind};

/// Noisy average-consensus experiments.
#[derive(Debug, Parser)]
#[command(name = "consensus-lab", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: config `out_dir`, then $CONSENSUS_LAB_OUT_DIR, then ./out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Replica count, overriding the config.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Horizon, overriding the config.
    #[arg(long, global = true)]
    horizon: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Run a config once per value of a dotted parameter.
    Sweep {
        config: PathBuf,
        /// Dotted path such as `topology.delta`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<String>,
    },
    /// Run the randomized lemma suites, from a verify_suite config or with defaults.
    Verify {
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        cases: usize,
    },
    /// Render an SVG chart from a CSV artifact.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        kind: PlotKind,
        /// Defaults to the CSV path with an .svg extension.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        title: Option<String>,
    },
}

fn summarize(report: &ExperimentReport) {
    println!("{} -> {}", report.experiment, report.out_dir.display());
    for r in &report.rates {
        match r.expected {
            Some(e) => println!("  slope {}: {:.4} ± {:.4} (expected {e:.4})", r.name, r.slope, r.stderr),
            None => println!("  slope {}: {:.4} ± {:.4}", r.name, r.slope, r.stderr),
        }
    }
    for q in &report.quantities {
        println!("  {}: {}", q.name, q.value);
    }
    for c in &report.checks {
        println!("  check {}: {} (lhs {}, rhs {})", c.name, if c.holds { "pass" } else { "FAIL" }, c.lhs, c.rhs);
    }
    for n in &report.notes {
        println!("  note: {n}");
    }
}

fn verification(report: &ExperimentReport) -> Result<(), CliError> {
    let failed: Vec<&str> = report.failed_checks().iter().map(|c| c.name.as_str()).collect();
    if report.experiment == ExperimentKind::VerifySuite.name() && !failed.is_empty() {
        return Err(CliError::Verification(format!("failing properties: {}", failed.join(", "))));
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let o = Overrides { seed: cli.global.seed, out_dir: cli.global.out_dir, replicas: cli.global.replicas, horizon: cli.global.horizon };
    match cli.command {
        Command::Run { config } => {
            let report = run_experiment(&config, &o)?;
            summarize(&report);
            verification(&report)
        }
        Command::Sweep { config, param, values } => {
            let s = sweep(&config, &param, &values, &o)?;
            println!("sweep over {param}");
            for p in &s.points {
                println!("  {} = {}: slope {:.4} ± {:.4}", param, p.value, p.slope, p.stderr);
            }
            Ok(())
        }
        Command::Verify { config, cases } => {
            let report = match config {
                Some(c) => run_experiment(&c, &o)?,
                None => verify_all(cases, &o)?,
            };
            if report.experiment != ExperimentKind::VerifySuite.name() {
                return Err(CliError::Config(format!("at `kind`: verify needs verify_suite, got {}", report.experiment)));
            }
            summarize(&report);
            verification(&report)
        }
        Command::Plot { csv, kind, output, title } => {
            let text = std::fs::read_to_string(&csv).map_err(|source| CliError::Io { path: csv.display().to_string(), source })?;
            let title = title.unwrap_or_else(|| csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            let svg = emit_plot(&text, kind, &title, Some(&format!("source sha256 {}", sha256_hex(text.as_bytes()))))?;
            let out = output.unwrap_or_else(|| csv.with_extension("svg"));
            std::fs::write(&out, svg).map_err(|source| CliError::Io { path: out.display().to_string(), source })?;
            println!("{}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("consensus-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
