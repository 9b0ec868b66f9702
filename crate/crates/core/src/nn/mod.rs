//! Dense numeric core: matrices, layer primitives with reverse-mode rules,
//! parameter storage, Adam and a finite-difference checker.

mod adam;
mod gradcheck;
mod matrix;
pub mod ops;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use matrix::Matrix;
pub use params::ParamStore;
