//! Seeded replication runner, error curves, CSV/JSON output and the
//! experiment drivers behind the `siadmm` command line.

pub mod config;
pub mod curve;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind, ProblemKind, Settings, SCHEMA_VERSION};
pub use curve::{align_by_samples, ErrorCurve, Metric};
pub use experiments::{run, run_replications, AlgorithmOutcome};
pub use output::{write_report, ExperimentReport};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure{}: {source}", seed.map(|s| format!(" (seed {s})")).unwrap_or_default())]
    Numerical {
        seed: Option<u64>,
        #[source]
        source: siadmm::Error,
    },
    #[error("internal check failed: {0}")]
    Check(String),
    #[error("experiment verdict failed: {0}")]
    Failed(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 2 for configuration and output problems, 3 for numerical ones,
    /// 1 when an experiment ran but its pass/fail verdict is negative.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => 2,
            HarnessError::Numerical { .. } | HarnessError::Check(_) => 3,
            HarnessError::Failed(_) => 1,
        }
    }
}

impl From<siadmm::Error> for HarnessError {
    fn from(source: siadmm::Error) -> Self {
        HarnessError::Numerical { seed: None, source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Attaches the failing seed to a core error.
pub(crate) fn at_seed<T>(seed: u64, r: siadmm::Result<T>) -> Result<T> {
    r.map_err(|source| HarnessError::Numerical { seed: Some(seed), source })
}
