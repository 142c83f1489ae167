//! Generating-function symplectic integrators and necessary-condition
//! solvers for optimal control problems.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod cli;
pub mod dhs;
pub mod elimination;
pub mod error;
pub mod hamiltonian;
pub mod integrators;
pub mod model;
pub mod ocp;
pub mod numeric;
pub mod problem;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
