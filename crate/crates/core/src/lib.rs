//! Matrix-free Rosenbrock-Krylov integrators for stiff ODEs.
//!
//! The methods work in a reduced space spanned by a Krylov basis of the
//! Jacobian: [`krylov`] builds orthonormal (Arnoldi) or biorthogonal
//! (Lanczos) bases, [`integrator`] performs single ROK/BOROK steps on top of
//! them and [`stepcontrol`] drives whole integrations with adaptive step and
//! basis sizes. [`problem`] holds the ODE interface and built-in test
//! problems.

// `!(x > tol)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod integrator;
pub mod krylov;
pub mod linalg;
pub mod problem;
pub mod stepcontrol;
