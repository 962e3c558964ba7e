//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by construction, posterior updates, metric evaluation,
/// selection, and the brute-force oracles.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor or operation received an out-of-range parameter.
    InvalidParameter(String),
    /// The prior's survival mass `π̄_t` is no longer strictly positive, so the
    /// posterior recursion (which divides by it) cannot advance to time `t`.
    SurvivalExhausted {
        /// First time index with nonpositive survival mass.
        t: usize,
    },
    /// An observation or log-likelihood input was NaN or infinite.
    NonFinite(&'static str),
    /// An observation's shape does not match the stream model (e.g. a complex
    /// sample fed to a scalar model, or a non-binary Bernoulli value).
    ObservationMismatch(&'static str),
    /// A stream id was not in the active set.
    InactiveStream {
        /// Offending stream id.
        k: usize,
    },
    /// The exhaustive selection rule refuses instances this large.
    TooManyStreams {
        /// Current active-set size.
        n: usize,
        /// Hard cap for exhaustive enumeration.
        max: usize,
    },
    /// Neither the empty set nor the full set meets the risk tolerance, so no
    /// risk-controlled choice is guaranteed to exist.
    RiskInfeasible {
        /// Time step at which feasibility failed.
        t: usize,
    },
    /// Exhaustive search found no subset meeting the risk tolerance.
    NoFeasibleSelection,
    /// A brute-force oracle instance exceeds its enumerability bounds.
    OracleTooLarge(String),
    /// Backward induction hit a history with no feasible action.
    InfeasibleHistory {
        /// Time step of the offending history.
        t: usize,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::SurvivalExhausted { t } => {
                write!(f, "prior survival mass is not positive at t = {t}")
            }
            Error::NonFinite(what) => write!(f, "non-finite {what}"),
            Error::ObservationMismatch(msg) => write!(f, "observation mismatch: {msg}"),
            Error::InactiveStream { k } => write!(f, "stream {k} is not active"),
            Error::TooManyStreams { n, max } => write!(
                f,
                "active set of {n} streams exceeds the exhaustive cap of {max}; \
                 use the simplified rule"
            ),
            Error::RiskInfeasible { t } => write!(
                f,
                "risk tolerance unattainable at t = {t} for both the empty and the full set"
            ),
            Error::NoFeasibleSelection => {
                write!(f, "no subset of the active set meets the risk tolerance")
            }
            Error::OracleTooLarge(msg) => write!(f, "oracle instance too large: {msg}"),
            Error::InfeasibleHistory { t } => {
                write!(f, "no feasible action at some history at t = {t}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
