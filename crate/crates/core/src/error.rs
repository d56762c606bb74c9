use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}")]
    Dataset(String),

    #[error("{0}")]
    Folding(String),

    #[error("{0}")]
    Metric(String),

    #[error("{0}")]
    Model(String),

    /// External ranked lists contain items from the user's own training data.
    #[error("train-item leakage in external scores: {}", format_leaks(.0))]
    Leakage(Vec<(usize, String, String)>),

    #[error("{0}")]
    Efold(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Simulation(String),

    #[error("{0}")]
    Cache(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-parsable code, used as the `EFOLD-Exxx` prefix on the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "EFOLD-E002",
            Error::Parse { .. } => "EFOLD-E003",
            Error::Dataset(_) => "EFOLD-E004",
            Error::Folding(_) => "EFOLD-E005",
            Error::Metric(_) => "EFOLD-E006",
            Error::Model(_) => "EFOLD-E007",
            Error::Leakage(_) => "EFOLD-E008",
            Error::Efold(_) => "EFOLD-E009",
            Error::Fold { source, .. } => source.code(),
            Error::Simulation(_) => "EFOLD-E010",
            Error::Cache(_) => "EFOLD-E011",
            Error::Csv(_) => "EFOLD-E012",
            Error::Json(_) => "EFOLD-E013",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_fold(self, fold: usize) -> Self {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }
}

fn format_leaks(leaks: &[(usize, String, String)]) -> String {
    const SHOWN: usize = 20;
    let mut out = leaks
        .iter()
        .take(SHOWN)
        .map(|(fold, user, item)| format!("(fold {fold}, user {user}, item {item})"))
        .collect::<Vec<_>>()
        .join(", ");
    if leaks.len() > SHOWN {
        out.push_str(&format!(" and {} more", leaks.len() - SHOWN));
    }
    out
}
