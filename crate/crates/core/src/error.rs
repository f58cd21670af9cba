use thiserror::Error;

/// Errors produced by the library.
///
/// Two classes matter to callers: input/validation problems (bad configs,
/// out-of-domain arguments, incompatible grids) and genuine numerical
/// failures (lost root brackets, degenerate traces, ill-posed systems).
/// [`Error::is_validation`] distinguishes them for exit-status mapping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: {message}")]
    Validation { field: String, message: String },

    #[error("parse: {0}")]
    Parse(String),

    #[error("coefficient positivity: {name}({x}) = {value}, must be > 0")]
    CoefficientPositivity {
        name: &'static str,
        x: f64,
        value: f64,
    },

    #[error("domain: {0}")]
    Domain(String),

    #[error("root bracketing: {0}")]
    Bracketing(String),

    #[error("eigenvalue ordering: {0}")]
    EigenvalueOrdering(String),

    #[error("degenerate boundary trace: {0}")]
    DegenerateTrace(String),

    #[error("time step too coarse: |omega|*dt = {omega_dt:.3e} exceeds 0.5; use dt <= {suggested_dt:.3e}")]
    StepTooCoarse { omega_dt: f64, suggested_dt: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("ill-posed moment system: condition {condition:.3e} after cutoff {cutoff:.1e}; increase the cutoff or the horizon")]
    IllPosed { condition: f64, cutoff: f64 },

    #[error("degenerate poles: minimal separation {separation:.3e} is below 1e-9")]
    DegeneratePole { separation: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::Parse(_)
                | Error::CoefficientPositivity { .. }
                | Error::Domain(_)
                | Error::StepTooCoarse { .. }
                | Error::GridMismatch(_)
        )
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
