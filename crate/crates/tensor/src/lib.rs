//! Dense `f64` tensors with tape-based reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable value; ops that touch a grad-tracking input
//! record a backward rule on the output. [`Tensor::backward`] collects the
//! reachable subgraph into a [`Tape`], walks it in reverse topological order
//! and accumulates gradients into every leaf created with
//! [`Tensor::param`]. Downstream crates add fused ops through
//! [`Tensor::from_op`].

mod autograd;
pub mod dump;
mod error;
pub mod gradcheck;
pub mod kernels;
mod ops;
pub mod shape;
mod tensor;

pub use autograd::{backward, Gradients, Tape};
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_many};
pub use ops::{gelu_grad_scalar, gelu_scalar, ElementwiseOp};
pub use tensor::{is_grad_enabled, no_grad, BackwardFn, NoGradGuard, Tensor, TensorId};
