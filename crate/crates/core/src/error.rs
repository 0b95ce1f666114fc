use num_complex::Complex64;
use thiserror::Error;

/// Errors raised anywhere in the spectral pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expression parse error at offset {offset}: {message} (token `{token}`)")]
    Parse {
        offset: usize,
        token: String,
        message: String,
    },

    #[error("non-finite coefficient sample in `{name}` at x = {x}")]
    NonFiniteSample { name: String, x: f64 },

    #[error("breakpoint {0} lies outside the open interval (0, 1)")]
    BreakpointOutOfRange(f64),

    #[error("invalid coefficient input: {0}")]
    InvalidCoefficients(String),

    #[error("matrix kind `{kind}` is incompatible with the coefficient model: {reason}")]
    IncompatibleKind { kind: String, reason: String },

    #[error("non-finite state during propagation at lambda = {lambda}, x = {x}")]
    NonFiniteState { lambda: Complex64, x: f64 },

    #[error("index violation: {0}")]
    Index(String),

    #[error("rho = {0} lies on a sector boundary; the exponent ordering is ambiguous")]
    SectorBoundary(Complex64),

    #[error("asymptotic evaluation overflowed; last valid radius {last_valid:?}")]
    AsymptoticOverflow { last_valid: Option<f64> },

    #[error("characteristic function nearly vanishes on the contour near {0}")]
    ZeroOnContour(Complex64),

    #[error("winding number is not close to an integer (total phase {0} rad)")]
    NonIntegerWinding(f64),

    #[error("lambda = {lambda} is too close to a pole (Delta_{k}{k} relative size {rel:e})")]
    NearPole { lambda: Complex64, k: usize, rel: f64 },

    #[error("another pole {other} lies inside the Laurent contour around {center}")]
    PoleInsideContour { center: Complex64, other: Complex64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

/// Adds a description of what was being attempted to an error.
pub trait Context<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.context(context()))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
