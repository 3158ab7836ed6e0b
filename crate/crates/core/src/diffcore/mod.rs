//! Dense tensors and a small reverse-mode differentiation engine covering
//! the primitives the forecasting model is built from.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use graph::{elu, elu_grad, lp_norm, sigmoid, Graph, OpKind, Var};
pub use tensor::Tensor;
