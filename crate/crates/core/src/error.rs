use thiserror::Error;

/// Every failure mode surfaced by the library.
///
/// The variants double as the FFI status codes (see [`Error::code`]) and the
/// CLI exit-code classes (see [`Error::is_numerical`]).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain too small: mass {mass:e} lies outside or on the boundary")]
    DomainTooSmall { mass: f64 },
    #[error("density is not normalized")]
    Unnormalized,
    #[error("unsupported representation: {0}")]
    UnsupportedRepresentation(String),
    #[error("distributions live on different domains")]
    DomainMismatch,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("constant is unbounded: {0}")]
    UnboundedConstant(String),
    #[error("zero evidence ({evidence:e}): prior is not admissible for this step")]
    ZeroEvidence { evidence: f64 },
    #[error("degenerate variance {0:e}")]
    DegenerateVariance(f64),
    #[error("all particle weights are zero")]
    AllWeightsZero,
    #[error("missing constant: {0}")]
    MissingConstant(String),
    #[error("vacuous bound at step {step}: square-root argument {argument:e} is negative")]
    VacuousBound { step: usize, argument: f64 },
    #[error("the 1-Wasserstein form needs the domain diameter D")]
    MissingDiameter,
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Stable numeric code used by the C ABI. Zero is reserved for success.
    pub fn code(&self) -> i32 {
        match self {
            Error::InvalidDomain(_) => 1,
            Error::InvalidParameter(_) => 2,
            Error::DomainTooSmall { .. } => 3,
            Error::Unnormalized => 4,
            Error::UnsupportedRepresentation(_) => 5,
            Error::DomainMismatch => 6,
            Error::NonFinite(_) => 7,
            Error::UnboundedConstant(_) => 8,
            Error::ZeroEvidence { .. } => 9,
            Error::DegenerateVariance(_) => 10,
            Error::AllWeightsZero => 11,
            Error::MissingConstant(_) => 12,
            Error::VacuousBound { .. } => 13,
            Error::MissingDiameter => 14,
            Error::Io(_) => 15,
            Error::Config(_) => 16,
        }
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroEvidence { .. }
                | Error::NonFinite(_)
                | Error::AllWeightsZero
                | Error::DegenerateVariance(_)
                | Error::DomainTooSmall { .. }
                | Error::UnboundedConstant(_)
                | Error::VacuousBound { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(format!("{what} = {x}")))
    }
}
