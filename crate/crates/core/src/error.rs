use std::path::Path;

use thiserror::Error;

fn at(file: &str, line: &Option<u64>) -> String {
    match line {
        Some(l) => format!("{file} line {l}"),
        None => file.to_string(),
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{}{}: {message}", at(.file, .line), .column.as_ref().map(|c| format!(" column {c}")).unwrap_or_default())]
    Csv { file: String, line: Option<u64>, column: Option<String>, message: String },
    #[error("{}: unknown stop {stop_id:?}", at(.file, .line))]
    DanglingStop { file: String, line: Option<u64>, stop_id: String },
    #[error("{}: duplicate key {key:?}", at(.file, .line))]
    DuplicateKey { file: String, line: Option<u64>, key: String },
    #[error("{}: coordinate of {id:?} out of range ({lat}, {lon})", at(.file, .line))]
    CoordinateOutOfRange { file: String, line: Option<u64>, id: String, lat: f64, lon: f64 },
    #[error("{}: {message}", at(.file, .line))]
    Record { file: String, line: Option<u64>, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::io(path, source),
            kind => DataError::Csv {
                file: path.display().to_string(),
                line,
                column: None,
                message: format!("{kind:?}"),
            },
        }
    }

    pub(crate) fn record(file: &str, line: Option<u64>, message: String) -> Self {
        DataError::Record { file: file.to_string(), line, message }
    }

    /// True for problems with the input content rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, DataError::Io { .. })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("unknown route {0:?}")]
    UnknownRoute(String),
    #[error("route {0:?} is not active")]
    InactiveRoute(String),
    #[error("unknown stop {0:?}")]
    UnknownStop(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("regressor column {0} is linearly dependent on the others")]
    RankDeficient(usize),
    #[error("{0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("statistic undefined: {0}")]
    Undefined(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Data(e) => e.is_validation(),
            Error::Network(_) | Error::Config(_) => true,
            Error::Stats(_) | Error::Runtime(_) => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
