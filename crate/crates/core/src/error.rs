use thiserror::Error;

/// Errors raised across the simulator and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid composition: {0}")]
    InvalidComposition(String),
    #[error("invalid element: {0}")]
    InvalidElement(String),
    #[error("degenerate state: {0}")]
    DegenerateState(String),
    #[error("invalid overlap: |zeta| = {0} exceeds 1")]
    InvalidOverlap(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("undefined correlation: all four coincidence counts are zero")]
    UndefinedCorrelation,
    #[error("incomplete record, missing settings: {}", .0.join(", "))]
    IncompleteRecord(Vec<String>),
    #[error("no fringe: {0}")]
    NoFringe(String),
    #[error("inverted dip: {0}")]
    InvertedDip(String),
    #[error("incomplete tomography: {0}")]
    IncompleteTomography(String),
    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
