//! Numerical laboratory for the 1D tight-binding operator with bond
//! (off-diagonal) disorder on a periodic ring.
//!
//! The operator acts on `l²` of the ring as
//!
//! ```text
//! (H u)(n) = ω_n (u(n) − u(n+1)) − ω_{n−1} (u(n−1) − u(n))
//! ```
//!
//! with i.i.d. non-negative bond weights `ω`. The crate provides
//!
//! - [`disorder`]: bond-weight distributions, reproducible counter-based
//!   sampling streams, and the density functionals `‖ρ‖∞`, `‖sρ(s)‖∞`
//!   entering the Wegner/Minami reference bounds;
//! - [`operator`]: the periodic finite-volume matrix, matrix-free
//!   application, transfer matrices and eigenvector lower-bound windows;
//! - [`eigen`]: a dense symmetric eigensolver (Householder reduction +
//!   implicit-shift QL) producing the full ordered spectrum;
//! - [`perturb`]: eigenvalue perturbation theory — gradient, sum rule,
//!   Hessian via the reduced resolvent, two-parameter Jacobians, and the
//!   four 10×10 linear systems with their closed-form determinants;
//! - [`stats`]: density of states, the rescaled local point process,
//!   Poisson goodness of fit, and eigenvector localization diagnostics;
//! - [`experiments`]: Monte Carlo ensembles checking the Wegner, Minami,
//!   decorrelation, Poisson and multi-energy independence statements.

pub mod disorder;
pub mod eigen;
pub mod experiments;
pub mod matrix;
pub mod operator;
pub mod perturb;
pub mod stats;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A disorder specification or experiment configuration is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A transfer matrix was requested across a bond with zero weight.
    #[error("singular bond: ω_{bond} = 0, transfer matrix undefined")]
    SingularBond { bond: usize },

    /// Uniform transfer bounds require a positive lower weight bound.
    #[error("unbounded transfer: alpha0 = 0 admits arbitrarily large transfer matrices")]
    UnboundedTransfer,

    /// The eigensolver failed to converge.
    #[error("eigensolver failed to converge after {max_iter} iterations (n = {n}{seed_info})")]
    SolverFailure {
        n: usize,
        max_iter: usize,
        seed_info: String,
    },

    /// Perturbation theory was asked about a near-degenerate eigenvalue.
    #[error("eigenvalue {index} is near-degenerate: gap {gap:.3e} below threshold {threshold:.3e}")]
    DegenerateEigenvalue {
        index: usize,
        gap: f64,
        threshold: f64,
    },

    /// Normalized quantities with a 1/E prefactor refuse zero eigenvalues.
    #[error("zero eigenvalue: normalized form with 1/E prefactor undefined")]
    ZeroEigenvalue,

    /// Generic invalid call input (mismatched lengths, bad windows, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
