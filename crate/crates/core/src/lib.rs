//! Temperley-Lieb representations built from generalized Hadamard data, their
//! constant R-matrices, and the classified constant solutions `K` of the
//! reflection equation `Ř K₁ Ř K₁ = K₁ Ř K₁ Ř`.

pub mod error;
pub mod hadamard;
pub mod job;
pub mod kfactory;
pub mod model;
pub mod newton;
pub mod numerics;
pub mod reflection;
pub mod sweep;

pub use error::{Error, Result};
pub use numerics::{CMatrix, Tolerance, C64};
