use std::path::PathBuf;

use crate::wire::WireError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(String),

    #[error("csv row {row}, column '{column}': cannot parse '{value}' as a number")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("csv row {row} has {found} fields, header has {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),

    #[error("no column named '{0}'")]
    UnknownColumn(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model expects {expected} features but received {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("design matrix is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },

    #[error("smoother: {0}")]
    Smoother(String),

    #[error("backfitting iteration {iteration}: {source}")]
    Backfit {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("lineup panel {panel}: {source}")]
    PanelRefit {
        panel: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("lineup key: {0}")]
    Key(String),

    #[error("plot: {0}")]
    Plot(String),

    #[error(transparent)]
    Wire(#[from] WireError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
