//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by distribution, inference, and simulation routines.
///
/// Support violations of the GEV density are deliberately *not* errors: the
/// evaluation functions return a negative-infinity sentinel instead so that
/// optimizers can treat infeasible points as rejected. Parameter-domain
/// violations (nonpositive scale, shape at the removable singularity) are
/// hard errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A quantity that must be strictly positive was not.
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    /// A quantity that must be finite was NaN or infinite.
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },

    /// GEV shape parameter within the guard band around zero; the Gumbel
    /// limit is out of scope and all formulas divide by the shape.
    #[error("shape too close to zero: |{value}| < {guard}")]
    ShapeNearZero { value: f64, guard: f64 },

    /// Probability argument outside the open unit interval.
    #[error("probability must lie strictly inside (0, 1), got {value}")]
    ProbabilityOutOfRange { value: f64 },

    /// Sample cannot identify the parameter (for the inverse Gaussian:
    /// all observations equal, so the dispersion is unbounded).
    #[error("degenerate sample: {reason}")]
    DegenerateSample { reason: String },

    /// Structural problem with a dataset (sizes, indicator coding, design
    /// matrix rank, intercept column).
    #[error("invalid dataset: {reason}")]
    InvalidDataset { reason: String },

    /// Parameters violate the model support for the given data.
    #[error("infeasible parameters: {reason}")]
    Infeasible { reason: String },

    /// The interest-parameter curve was infinite everywhere in the bracket.
    #[error("no feasible interest value in bracket [{lo}, {hi}]")]
    NoFeasiblePoint { lo: f64, hi: f64 },

    /// The sample-space derivative matrix is singular or too ill-conditioned
    /// for the modification factor to be trusted.
    #[error("modification undefined: {reason} (condition number {cond:.3e})")]
    ModificationUndefined { reason: &'static str, cond: f64 },

    /// Summary statistics requested for an empty estimate set.
    #[error("cannot summarize an empty estimate set")]
    EmptyEstimates,

    /// Numeric derivative check could not find a usable step size.
    #[error("finite-difference stencil infeasible after {shrinks} step shrinks")]
    StencilInfeasible { shrinks: u32 },
}
