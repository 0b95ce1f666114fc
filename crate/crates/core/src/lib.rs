//! Spectral computations for fourth-order differential operators with
//! distributional coefficients.
//!
//! A [`Problem`] bundles a regularization matrix with solver settings.
//! [`spectra::three_spectra`] finds the eigenvalues of the three boundary
//! value problems, [`weyl::weyl_matrix`] evaluates the Weyl matrix and
//! [`lab`] drives configured experiments.

pub mod coeffs;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod charfun;
pub mod propagator;
pub mod spectra;
pub mod weyl;
pub mod lab;

pub use coeffs::{CoefficientSpec, FnInput, MatrixKind, Regime};
pub use error::{Error, Result};
pub use linalg::C64;
pub use propagator::{Problem, SolverSettings};
