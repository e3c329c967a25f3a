use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {context}: parameter index {index}")]
    NonFinite { context: String, index: usize },

    #[error("training aborted at epoch {epoch}: non-finite loss term `{term}`")]
    TrainingDiverged { epoch: usize, term: String },

    #[error("fixed-point iteration did not converge after {iters} iterations (last delta {delta:e})")]
    NoConvergence { iters: usize, delta: f64 },

    #[error("simulation left valid bounds at step {step}: {detail}")]
    Unstable { step: usize, detail: String },

    #[error("at day {day}: {source}")]
    AtDay {
        day: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn at_day(self, day: usize) -> Self {
        Error::AtDay {
            day,
            source: Box::new(self),
        }
    }
}
