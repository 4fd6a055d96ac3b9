//! Radial step functions on `Q_p^n` and exact evaluation of variable-exponent
//! Lebesgue, Herz, Morrey-Herz and central mean oscillation norms, together
//! with fractional Hardy operators, their adjoints and commutators.
//!
//! Functions and exponents are constant on the shells `S_k = {|x|_p = p^k}`.
//! Inside a finite window every shell value is stored; outside it a function
//! follows a power law `A·p^{k e}` and an exponent is constant, so every norm
//! and operator reduces to finite sums plus geometric series.
//!
//! ```
//! use ultraherz::{luxemburg_norm, ExponentFunction, PadicContext, RadialStepFunction};
//!
//! let ctx = PadicContext::new(2, 1).unwrap();
//! let f = RadialStepFunction::shell_indicator(ctx, 0).unwrap();
//! let u = ExponentFunction::constant(ctx, 2.0).unwrap();
//! let norm = luxemburg_norm(&f, &u, 1e-12).unwrap();
//! assert!((norm.value - 0.5f64.sqrt()).abs() < 1e-9);
//! ```

pub mod error;
pub mod harness;
pub mod norms;
pub mod operators;
pub mod oracle;
pub mod padic;
pub mod radial;
pub mod real;

pub use error::{Error, Result};
pub use harness::{
    boundedness_ratio, check_lemmas, sharpness_probe, sweep, validate_hypotheses, write_csv, Experiment, FamilySpec,
    HypothesisReport, Lemma, LemmaReport, Orientation, RatioReport, Theorem, TheoremConfig,
};
pub use norms::{
    ball_indicator_norm, cmo_norm, herz_norm, luxemburg_norm, modular, morrey_herz_norm, CmoOptions, HerzParams,
    MorreyHerzParams, NormResult, DEFAULT_REL_TOL,
};
pub use operators::{commutator, hardy, hardy_adjoint, maximal, OperatorKind, OperatorSpec};
pub use oracle::{mc_integrate, mc_luxemburg, mc_operator_probe, Estimate, OracleConfig};
pub use padic::{PadicContext, PadicPoint, Region};
pub use radial::{
    check_regularity, check_regularity_against, ExponentFunction, PowerTail, RadialStepFunction, RegularityMode,
    RegularityReport, Verdict,
};

// Guide chapters, compiled and run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/shells.md")]
    struct Shells;
    #[doc = include_str!("../../../book/src/functions.md")]
    struct Functions;
    #[doc = include_str!("../../../book/src/norms.md")]
    struct Norms;
    #[doc = include_str!("../../../book/src/operators.md")]
    struct Operators;
    #[doc = include_str!("../../../book/src/oracle.md")]
    struct Oracle;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
    #[doc = include_str!("../../../README.md")]
    struct Readme;
}
