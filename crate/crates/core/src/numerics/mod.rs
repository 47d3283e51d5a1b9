//! Dense tensors, forward kernels and taped reverse-mode gradients.

pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod scalar;
pub mod tensor;

pub use graph::{CustomOp, Gradients, Graph, Var};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
