use thiserror::Error;

/// Errors produced by the solvers, the simulator and the configuration layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The channel fixed point did not settle within the iteration budget.
    #[error(
        "omega fixed point did not converge after {iterations} iterations (residual {residual:e})"
    )]
    OmegaNotConverged {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A solver failure inside the simulation loop, annotated with its position.
    #[error("slot {slot}, ue {ue}: {source}")]
    Slot {
        slot: usize,
        ue: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trace shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_slot(self, slot: usize, ue: usize) -> Self {
        Error::Slot {
            slot,
            ue,
            source: Box::new(self),
        }
    }

    /// Whether the error is a numerical/solver failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::OmegaNotConverged { .. } | Error::LinearAlgebra(_) | Error::Numerical(_) => true,
            Error::Slot { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
