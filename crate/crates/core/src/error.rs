use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Resource,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Resource => 4,
            ErrorKind::Io => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Numerical => "numerical",
            ErrorKind::Resource => "resource",
            ErrorKind::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside [0, 1]")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("degree {degree} exceeds the configured cap {cap}; raise the cap")]
    DegreeCap { degree: usize, cap: usize },

    #[error(
        "series order {order} cannot reach tolerance {tolerance:e} at z = {z} \
         (tail bound {tail:e}); increase order to at least {needed}"
    )]
    OrderTooLow {
        order: usize,
        z: f64,
        tolerance: f64,
        tail: f64,
        needed: usize,
    },

    #[error("precision: {0}")]
    Precision(String),

    #[error("root scan reached z = {ceiling} after finding {found} of {requested} roots")]
    ScanCeiling {
        found: usize,
        requested: usize,
        ceiling: f64,
    },

    #[error("inconsistent result: {0}")]
    Inconsistent(String),

    #[error("proven bound violated: {0}")]
    BoundViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain { .. } | Error::InvalidMeasure(_) | Error::Config(_) => ErrorKind::Config,
            Error::DegreeCap { .. } => ErrorKind::Config,
            Error::Resource(_) => ErrorKind::Resource,
            Error::OrderTooLow { .. }
            | Error::Precision(_)
            | Error::ScanCeiling { .. }
            | Error::Inconsistent(_)
            | Error::BoundViolation(_) => ErrorKind::Numerical,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn check_unit(what: &'static str, value: f64) -> Result<()> {
        if (0.0..=1.0).contains(&value) {
            Ok(())
        } else {
            Err(Error::Domain { what, value })
        }
    }
}
