//! Galerkin finite elements and backward Euler time stepping for the
//! stochastic Allen-Cahn equation
//!
//! ```text
//! dX + AX dt = (X - X³) dt + dW,   A = -∂²/∂x² on (0, 1), Dirichlet,
//! ```
//!
//! driven by a `Q`-Wiener process with `Q = A^{-s}`, together with a Monte
//! Carlo harness that measures strong convergence rates in space and time.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fem;
pub mod harness;
pub mod noise;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
