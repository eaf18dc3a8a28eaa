//! Common Lyapunov functions for switched holomorphic systems on the polydisk,
//! built from the Koopman generator in the monomial basis.
//!
//! The pipeline, end to end:
//!
//! 1. [`liealg`] decides whether the Jacobians at the origin generate a
//!    solvable Lie algebra and, if so, finds a common triangularizing basis.
//! 2. [`vectorfield`] moves every subsystem into that basis.
//! 3. [`koopman`] assembles the truncated generator matrices, which are upper
//!    triangular in the graded monomial order of [`multiindex`].
//! 4. [`certificate`] checks a weight-scheme condition, runs the ε recursion,
//!    tests convergence of the Lyapunov series and finds a certified radius.
//! 5. [`switchsim`] audits the result by integrating randomly switched
//!    trajectories and watching the Lyapunov function.
//!
//! [`cli`] wires the same steps to a JSON config/report format.

pub mod certificate;
pub mod cli;
pub mod halton;
pub mod koopman;
pub mod liealg;
pub mod linalg;
pub mod multiindex;
mod poly;
pub mod serial;
pub mod switchsim;
pub mod systems;
pub mod vectorfield;

pub use nalgebra::Complex;

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;

pub use certificate::{certify, CertificateReport, CertifyOptions, Clf, Outcome, WeightScheme};
pub use koopman::KoopmanMatrix;
pub use liealg::{MatrixLieAlgebra, TriangularizationResult};
pub use multiindex::{MultiIndex, MultiIndexBasis};
pub use switchsim::{SwitchedRun, SwitchingSignal};
pub use vectorfield::{PolyVectorField, SwitchedFamily};

/// Shorthand for a real complex number.
#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}
