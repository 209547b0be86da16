use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} outside [0, 1] for {what}")]
    NotARisk { what: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("comparator returned a non-finite value at q={q}, r={r}")]
    NonFiniteDelta { q: f64, r: f64 },

    #[error("flat crossing: dDelta/dp = {slope} at p={x}")]
    FlatCrossing { x: f64, slope: f64 },

    #[error("optimizer aborted after {0} consecutive non-finite steps")]
    OptimizerAborted(usize),

    #[error("Gram matrix not positive definite even with jitter {jitter}")]
    Factorization { jitter: f64 },

    #[error("no balanced task after {draws} draws")]
    TooManyRejections { draws: usize },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
