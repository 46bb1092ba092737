use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The grid cannot resolve the stable multiplier at the requested time.
    #[error("grid under-resolved: exp(-t|xi_max|^alpha) = {decay:e} at the Nyquist frequency (need < 1e-14)")]
    UnderResolved { decay: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Non-finite values appeared during time stepping.
    #[error("non-finite value at t = {time}: {what}")]
    NonFinite { time: f64, what: String },

    #[error("mass drift {drift:e} at t = {time} exceeds tolerance")]
    MassDrift { time: f64, drift: f64 },

    /// A numerical self-check fell outside its tolerance.
    #[error("check failed: {0}")]
    Tolerance(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures raised by the numerics (blow-up, mass drift) as
    /// opposed to rejected input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. } | Error::MassDrift { .. } | Error::Tolerance(_) => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParameter(_)
            | Error::UnderResolved { .. }
            | Error::LengthMismatch { .. }
            | Error::Config(_) => true,
            Error::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
