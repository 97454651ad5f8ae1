use thiserror::Error;

/// Errors raised by the selection toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid subset {subset:?}: {reason}")]
    InvalidSubset { subset: Vec<usize>, reason: String },

    #[error("rank-deficient design for subset {subset:?} (numerical rank {rank} < {columns})")]
    RankDeficient {
        /// 1-based feature indices of the offending subset.
        subset: Vec<usize>,
        rank: usize,
        columns: usize,
    },

    #[error("target has zero variance but the fit leaves a non-zero residual")]
    ZeroVarianceTarget,

    #[error("{method}: every candidate at step {step} yields a degenerate fit")]
    DegenerateStep { method: String, step: usize },

    #[error("{what}: {count} subsets exceed the budget of {budget}")]
    BudgetExceeded {
        what: &'static str,
        count: u128,
        budget: u128,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}, column '{column}': {message}")]
    Parse { line: u64, column: String, message: String },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failure classes mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Validation,
    Computation,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. } | Error::Csv(_) => ErrorKind::Parse,
            Error::InvalidSubset { .. }
            | Error::InvalidDataset(_)
            | Error::InvalidConfig(_)
            | Error::BudgetExceeded { .. } => ErrorKind::Validation,
            Error::RankDeficient { .. } | Error::ZeroVarianceTarget | Error::DegenerateStep { .. } => {
                ErrorKind::Computation
            }
            Error::Io(_) | Error::Json(_) => ErrorKind::Io,
            Error::Stage { source, .. } => source.kind(),
        }
    }

    pub fn is_degenerate_fit(&self) -> bool {
        matches!(self, Error::RankDeficient { .. } | Error::ZeroVarianceTarget)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
