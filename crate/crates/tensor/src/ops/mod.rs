mod elementwise;
mod layout;
mod linalg;
mod reduce;
mod softmax;

pub use elementwise::{gelu_grad_scalar, gelu_scalar, ElementwiseOp};
