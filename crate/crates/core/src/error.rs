use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {value} outside the domain [0, {radius}) of the {family} kernel")]
    Domain {
        family: &'static str,
        value: f64,
        radius: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no observations")]
    NoObservations,
    #[error("zero weight at k = {0}")]
    ZeroWeight(u64),
    #[error("non-finite entry in least-squares problem")]
    NonFinite,
    #[error("unknown scenario `{name}`; registry: {registry}")]
    UnknownScenario { name: String, registry: String },
    #[error("too many failed replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
