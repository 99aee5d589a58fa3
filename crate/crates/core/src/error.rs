use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("weight e^(eta|y|) overflows on grid: eta = {eta}, y = {y}")]
    Range { eta: f64, y: f64 },

    #[error("coefficient contract violated: {constant} declared {declared}, observed {observed} at witness ({x}, {y})")]
    CoefficientContract {
        constant: &'static str,
        declared: f64,
        observed: f64,
        x: f64,
        y: f64,
    },

    #[error("non-finite state at time step {step}")]
    Divergence { step: usize },

    #[error("underpowered estimate: standard error {std_err:.3e} exceeds {limit_pct}% of {reference:.3e}; raise replicas")]
    Underpowered {
        std_err: f64,
        reference: f64,
        limit_pct: f64,
    },

    #[error("coupling integrity: zero entropy shift produced distance {distance:.3e}")]
    CouplingIntegrity { distance: f64 },

    #[error("feedback shift requires realized paths under the shifted measure")]
    MissingPaths,

    #[error("truncation tail {tail:.3e} exceeds tolerance {tol:.3e} ({context})")]
    TailGuard {
        tail: f64,
        tol: f64,
        context: String,
    },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
