//! Spectral path-following solver for the Fu-Yau Hessian equation with
//! `α < 0` on flat complex tori.
//!
//! Layers, bottom-up: [`symfunc`] (symmetric functions of eigenvalues and the
//! Γ₂ cone), [`fields`] (grids, spectral derivatives, exterior algebra),
//! [`model`] (problem data and residuals), [`linearized`] (linearized
//! operator and Newton steps) and [`continuation`] (the path driver and
//! diagnostics).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod continuation;
pub mod error;
pub mod fields;
pub mod krylov;
pub mod linearized;
pub mod model;
pub mod symfunc;
pub mod verify;

pub use error::{FyError, Result};
pub use fields::{
    complex_hessian, integrate, ComplexField, Deriv, Form, HermitianField, ScalarField, TorusGrid,
};
pub use symfunc::{ConeStatus, HermitianMatrix, Metric, Spectrum};
