//! Dense `f64` tensors with a reverse-mode tape.
//!
//! The operation set is exactly what the recurrent intensity model needs:
//! pointwise activations, affine maps, concatenation and slicing, dot
//! products, softmax and log-sum-exp. Broadcasting is limited to a scalar
//! operand in pointwise binary ops.

mod tape;
mod tensor;

use thiserror::Error;

pub use tape::{Binary, NodeId, Tape, Unary};
pub use tensor::Tensor;

#[cfg(test)]
use tape::{softmax_values, softplus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} needs {expected} elements, got {actual}")]
    LengthMismatch { shape: Vec<usize>, expected: usize, actual: usize },
    #[error("non-finite value produced in {context}")]
    NonFinite { context: &'static str },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("log of non-positive value {value}")]
    LogDomain { value: f64 },
    #[error("{op} of an empty input")]
    Empty { op: &'static str },
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },
}
