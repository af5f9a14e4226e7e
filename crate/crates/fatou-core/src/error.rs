//! Error type shared by all modules.
//!
//! Every variant carries enough context to be actionable and maps to a stable
//! machine-readable code via [`Error::code`], which the CLI turns into
//! distinct exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("invalid degree {degree}: {context}")]
    InvalidDegree { degree: u32, context: String },

    #[error("multi-indices of unequal degree are incomparable: |α|={left} vs |β|={right}")]
    IncomparableDegrees { left: u32, right: u32 },

    #[error("linear part is numerically singular (condition number {cond:.3e})")]
    SingularLinearPart { cond: f64 },

    #[error("triangular map has near-zero diagonal entry c_{index} = {modulus:.3e}")]
    SingularDiagonal { index: usize, modulus: f64 },

    #[error("map is not triangular: strictly upper entry ({row},{col}) has modulus {modulus:.3e} > {tol:.1e}")]
    NotTriangular {
        row: usize,
        col: usize,
        modulus: f64,
        tol: f64,
    },

    #[error("moduli are not correctly ordered: worst ratio {worst_ratio:.6} at (l={l}, j={j}, i={i}) exceeds {xi_order}")]
    NotCorrectlyOrdered {
        worst_ratio: f64,
        l: usize,
        j: usize,
        i: usize,
        xi_order: f64,
    },

    #[error("sequence is not uniformly attracting: {context}")]
    NotUniformlyAttracting { context: String },

    #[error("orbit of the origin escapes the declared neighborhood at step {step} (|x_{step}| = {norm:.3e} > ρ = {rho:.3e})")]
    OrbitEscapes { step: usize, norm: f64, rho: f64 },

    #[error("no spectral split: relative gap {gap:.3e} after index {index} is below gap_spec {gap_spec:.3e}")]
    NoSplit {
        index: usize,
        gap: f64,
        gap_spec: f64,
    },

    #[error("flag tracking diverged (perturbation too large): backward subspace gap grew from {from:.3e} to {to:.3e} near step {step}")]
    PerturbationTooLarge { step: usize, from: f64, to: f64 },

    #[error("affine recurrence is not expanding: |a_{step}| = {modulus:.6} ≤ 1")]
    NotExpanding { step: usize, modulus: f64 },

    #[error("attraction hypothesis violated at term (n={n}, j={j}, α={alpha:?}): multiplier modulus {modulus:.6} ≤ 1")]
    AttractionHypothesisViolated {
        n: usize,
        j: usize,
        alpha: Vec<u32>,
        modulus: f64,
    },

    #[error("truncation degree p={p} too small: extension term (n={n}, j={j}, α={alpha:?}) has non-expanding multiplier modulus {modulus:.6}")]
    PTooSmall {
        p: u32,
        n: usize,
        j: usize,
        alpha: Vec<u32>,
        modulus: f64,
    },

    #[error("conjugacy residual {residual:.3e} exceeds the acceptance tolerance {tol:.1e}")]
    ResidualTooLarge { residual: f64, tol: f64 },

    #[error("horizon {horizon} too short: {context}")]
    HorizonTooShort { horizon: usize, context: String },

    #[error("no geometric convergence: fitted delta ratio {ratio:.6} ≥ 1 over the window starting at n={window_start}")]
    NoConvergence { ratio: f64, window_start: usize },

    #[error("point is not in the basin: |orbit| = {norm:.3e} exceeded the overflow guard at step {step}")]
    NotInBasin { step: usize, norm: f64 },

    #[error("perturbation of size {epsilon:.3e} not realizable: {context}")]
    PerturbationUnrealizable { epsilon: f64, context: String },

    #[error("infeasible generator parameters: {context}")]
    InfeasibleParameters { context: String },

    #[error("invalid configuration: {context}")]
    InvalidConfig { context: String },

    #[error("numerical domain error: {context}")]
    Domain { context: String },
}

impl Error {
    /// Stable machine-readable code for serialization and exit-code mapping.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::InvalidDegree { .. } => "invalid-degree",
            Error::IncomparableDegrees { .. } => "incomparable-degrees",
            Error::SingularLinearPart { .. } => "singular-linear-part",
            Error::SingularDiagonal { .. } => "singular-diagonal",
            Error::NotTriangular { .. } => "not-triangular",
            Error::NotCorrectlyOrdered { .. } => "not-correctly-ordered",
            Error::NotUniformlyAttracting { .. } => "not-uniformly-attracting",
            Error::OrbitEscapes { .. } => "orbit-escapes",
            Error::NoSplit { .. } => "no-split",
            Error::PerturbationTooLarge { .. } => "perturbation-too-large",
            Error::NotExpanding { .. } => "not-expanding",
            Error::AttractionHypothesisViolated { .. } => "attraction-hypothesis-violated",
            Error::PTooSmall { .. } => "p-too-small",
            Error::ResidualTooLarge { .. } => "residual-too-large",
            Error::HorizonTooShort { .. } => "horizon-too-short",
            Error::NoConvergence { .. } => "no-convergence",
            Error::NotInBasin { .. } => "not-in-basin",
            Error::PerturbationUnrealizable { .. } => "perturbation-unrealizable",
            Error::InfeasibleParameters { .. } => "infeasible-parameters",
            Error::InvalidConfig { .. } => "invalid-config",
            Error::Domain { .. } => "domain-error",
        }
    }

    /// Coarse stage classification used by the CLI for exit codes.
    pub fn stage(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. }
            | Error::InvalidDegree { .. }
            | Error::IncomparableDegrees { .. }
            | Error::SingularLinearPart { .. }
            | Error::SingularDiagonal { .. }
            | Error::NotTriangular { .. }
            | Error::Domain { .. } => "algebra",
            Error::PerturbationUnrealizable { .. } | Error::InfeasibleParameters { .. } => {
                "generation"
            }
            Error::NotCorrectlyOrdered { .. }
            | Error::NotUniformlyAttracting { .. }
            | Error::OrbitEscapes { .. }
            | Error::NoSplit { .. }
            | Error::PerturbationTooLarge { .. } => "normalization",
            Error::NotExpanding { .. }
            | Error::AttractionHypothesisViolated { .. }
            | Error::PTooSmall { .. }
            | Error::ResidualTooLarge { .. }
            | Error::HorizonTooShort { .. } => "solver",
            Error::NoConvergence { .. } | Error::NotInBasin { .. } => "diagnostics",
            Error::InvalidConfig { .. } => "config",
        }
    }
}
