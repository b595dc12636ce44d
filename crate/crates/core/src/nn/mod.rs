//! Small dense-tensor engine with hand-written backward passes for the
//! layers the decryption network and the evaluation classifier use.

mod adam;
pub mod conv;
pub mod gradcheck;
mod layers;
mod loss;
mod scalar;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig};
pub use conv::{Grads, conv2d_backward, conv2d_forward, deconv2d_backward, deconv2d_forward};
pub use layers::{
    sigmoid, BatchNorm2d, Conv2d, ConvTranspose2d, Flatten, Layer, LayerSpec, Linear, MaxPool2d,
    Mode, Relu, Sequential, Sigmoid, BN_EPSILON, BN_MOMENTUM,
};
pub use loss::{l2_penalty, l2_penalty_value, mse_loss, softmax_cross_entropy};
pub use scalar::Scalar;
pub use tensor::{Parameter, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("batchnorm needs at least 2 samples in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("parameter {0} has no gradient since its last update")]
    StaleGradient(String),
    #[error("{0}")]
    State(String),
}
