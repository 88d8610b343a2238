//! Forward solution and parameter identification for scalar variational
//! inequalities of the second kind with Tresca-type friction:
//!
//! ```text
//! t(e; u, v - u) + s(f; v) - s(f; u) >= l(v - u)   for all v,
//! s(f; v) = ∫_D f |v|,
//! ```
//!
//! where `e` is a distributed ellipticity coefficient and `f` a friction
//! coefficient on the friction set `D`. The nonsmooth modulus is replaced by
//! convolution smoothings `M_eps`, which makes the parameter-to-state map
//! differentiable; ellipticity and friction are then identified from an
//! observation by box-constrained regularized output least squares.

pub mod discretization;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod identification;
pub mod kernels;
pub mod linalg;
pub mod sensitivity;

pub use error::{Error, Result};
pub use kernels::{KernelSpec, SmoothedEval, Smoothing};
