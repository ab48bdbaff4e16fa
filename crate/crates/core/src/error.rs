use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed circuit, operator or array shape.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("coupling singularity: {0}")]
    Singularity(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("not converged after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        best: Vec<f64>,
    },

    #[error("degenerate CIS states {0} and {1}: response block is singular")]
    DegenerateStates(usize, usize),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    pub fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. } | Error::SingularSystem(_) | Error::DegenerateStates(..) => 3,
            Error::Consistency(_) => 4,
            _ => 2,
        }
    }
}
