//! Dense tensors and the handful of layers the detector needs, each with an
//! explicit backward pass, plus SGD with momentum and a finite-difference
//! gradient checker.

mod activation;
mod conv;
mod gradcheck;
mod optim;
mod pool;
mod tensor;
pub mod weights;

pub use activation::{leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
pub use conv::{conv2d, conv2d_backward, Conv2dGrads};
pub use gradcheck::grad_check;
pub use optim::{sgd_step, LrSchedule, OptimizerState};
pub use pool::{maxpool2d, maxpool2d_backward, PoolIndices};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub(crate) fn mismatch(msg: impl Into<String>) -> NnError {
    NnError::ShapeMismatch(msg.into())
}
