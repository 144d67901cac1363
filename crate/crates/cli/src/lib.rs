//! Configuration-driven experiment runner for `consensus-lab`.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod report;
pub mod sweep;

pub use config::{ExperimentConfig, ExperimentKind, Overrides, OUT_DIR_ENV};
pub use experiment::{execute, run_experiment, verify_all};
pub use plot::{emit_plot, PlotKind};
pub use report::ExperimentReport;
pub use sweep::{sweep, SweepReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 1 runtime failure, 2 config error, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 1,
            CliError::Verification(_) => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<consensus_lab::Error> for CliError {
    fn from(e: consensus_lab::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
