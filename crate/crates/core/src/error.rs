use thiserror::Error;

/// Errors raised by the exact and numerical routines of this crate.
///
/// Divergent series are *not* errors for norms: they come back as a
/// non-convergent [`NormResult`](crate::norms::NormResult). Everything here
/// is a genuine domain or contract violation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0} is not a prime")]
    NotPrime(u32),

    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("zero denominator")]
    ZeroDenominator,

    #[error("shell index {index} outside the supported window [-{limit}, {limit}]")]
    ShellOutOfRange { index: i64, limit: i32 },

    #[error("contexts differ: p={p1}, n={n1} vs p={p2}, n={n2}")]
    ContextMismatch { p1: u32, n1: u32, p2: u32, n2: u32 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(
        "incompatible {side} tail rates {left} and {right}; widen the windows so the \
         tails agree before combining"
    )]
    IncompatibleTails { side: &'static str, left: f64, right: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("operator output is not a single power-law tail on the {side} side: {detail}")]
    Unrepresentable { side: &'static str, detail: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
