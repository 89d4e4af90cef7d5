//! Dense matrices and the reverse-mode differentiation engine.

mod gradcheck;
mod graph;
mod matrix;

pub use gradcheck::{
    finite_diff_check, finite_diff_check_many, finite_diff_check_with, relative_error, FdOptions, Stencil, DEFAULT_STEP,
};
pub use graph::{Graph, Var, NORM_EPS};
pub use matrix::Matrix;

pub(crate) use matrix::dot;
