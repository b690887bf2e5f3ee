//! Numerical toolkit for weak U(1)-bundle curvatures: slice distances between
//! 2-forms on the sphere, integer-flux vector fields in three dimensions, and
//! boundary-constrained `L^p` energy minimization.

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod field;
pub mod flow;
pub mod linalg;
pub mod metric;
pub mod plateau;
pub mod report;
pub mod slices;
pub mod sphere;
pub mod suite;

pub use error::{Error, Result};
