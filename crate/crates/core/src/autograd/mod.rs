//! Dense 2-D tensors with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every sample: leaves borrow parameter
//! tensors, each operation appends one node, and [`Graph::backward`] walks
//! the tape in reverse. Gradients of leaves accumulate across calls until
//! they are taken or zeroed.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, op_suite, relative_error};
pub use graph::{sigmoid, GradBuf, Graph, Reduce, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutogradError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("index {id} out of range for table with {len} rows")]
    Index { id: usize, len: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}

#[cfg(test)]
mod tests;
