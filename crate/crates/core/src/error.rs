use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input table. `line` is 1-based and counts the header row.
    #[error("{}:{line}: {message}", file.display())]
    Load {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid join file: {0}")]
    Spec(String),

    #[error("cyclic join: residual hyperedges {}", format_residual(.residual))]
    Cyclic { residual: Vec<Vec<String>> },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("join count overflowed 128-bit integer arithmetic")]
    Overflow,

    #[error("materialization refused: join has {estimated} rows, cap is {cap}")]
    CapExceeded { estimated: u128, cap: u128 },

    #[error("pseudo-cube region contains no join tuples")]
    EmptyRegion,

    #[error("build failed: {0}")]
    Build(String),

    #[error("training diverged at iteration {iteration}: objective rose for {streak} consecutive steps")]
    Diverged { iteration: usize, streak: usize },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Load { .. } => "load",
            Error::Spec(_) => "spec",
            Error::Cyclic { .. } => "cyclic",
            Error::Contract(_) => "contract",
            Error::Overflow => "overflow",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::EmptyRegion => "empty_region",
            Error::Build(_) => "build",
            Error::Diverged { .. } => "diverged",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

fn format_residual(residual: &[Vec<String>]) -> String {
    let edges: Vec<String> = residual
        .iter()
        .map(|e| format!("{{{}}}", e.join(",")))
        .collect();
    edges.join(" ")
}
