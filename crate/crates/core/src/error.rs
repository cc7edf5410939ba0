use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular system (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("infeasible fit: {0}")]
    InfeasibleFit(String),

    #[error("degenerate neuron {0}: zero input weights with nonzero head")]
    DegenerateNeuron(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
