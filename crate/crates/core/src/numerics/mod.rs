//! Self-contained numerical kernels shared by every other module: the
//! complete elliptic integral of the first kind, the digamma function on the
//! critical line `1/2 + iy`, a damped Gauss–Newton (Levenberg–Marquardt)
//! least-squares driver and an algebraic-plus-geometric circle fit.
//!
//! Everything here is a pure function of its inputs.

mod circle;
mod digamma;
mod elliptic;
mod lsq;

pub use circle::{circle_fit, taubin_circle, Circle2D};
pub use digamma::digamma_half_line;
pub use elliptic::elliptic_k;
pub use lsq::{central_jacobian, least_squares_fit, Bound, FitOptions, FitResult};

use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("argument {value} outside the domain of {function}: {reason}")]
    Domain {
        function: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("jacobian is rank deficient: rank {rank} for {params} parameters")]
    SingularJacobian { rank: usize, params: usize },
    #[error("{residuals} residuals cannot determine {params} parameters")]
    Underdetermined { residuals: usize, params: usize },
    #[error("initial value {value} of parameter {index} lies outside its bounds [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("model produced a non-finite residual at the initial point")]
    NonFiniteResidual,
    #[error("degenerate point set: {0}")]
    Degenerate(&'static str),
}
