use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index set is not downward closed")]
    NotDownwardClosed,

    #[error("{0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("evaluation failed at level {level}, point {point}: {source}")]
    Evaluation {
        level: usize,
        point: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } | Error::Domain(_) | Error::Precondition(_) => "input",
            Error::NotDownwardClosed => "invalid-state",
            Error::Config(_) => "config",
            Error::Numerical(_) => "numerical",
            Error::Internal(_) => "internal",
            Error::Evaluation { source, .. } => source.category(),
            Error::Parse(_) | Error::Json(_) | Error::Csv(_) => "parse",
            Error::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "input" | "invalid-state" => 3,
            "numerical" => 4,
            "parse" => 5,
            "io" => 6,
            _ => 70,
        }
    }

    pub(crate) fn at(level: usize, point: usize, source: Error) -> Error {
        Error::Evaluation {
            level,
            point,
            source: Box::new(source),
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
