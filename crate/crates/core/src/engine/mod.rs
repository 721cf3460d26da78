//! Dense double-precision tensors with reverse-mode differentiation.

mod graph;
mod tensor;

pub use graph::{Graph, Var, MASK_NEG};
pub use tensor::Tensor;
