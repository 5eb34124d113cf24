//! Minimal convolutional network with exact backpropagation.
//!
//! Activations are stored as [`Tensor3`] in row-major `(h, w, c)` order. A
//! dense layer sees its input as a `1 x 1 x n` tensor, so flatten is a
//! reshape.

mod checkpoint;
pub mod gradcheck;
mod layers;
mod network;
mod tensor;

pub use checkpoint::{load_params, read_params, save_params, write_params, FORMAT_VERSION, MAGIC};
pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool_backward,
    maxpool_forward, relu, relu_backward, same_padding, ConvGrads, DenseGrads, PoolOutput,
};
pub use network::{
    backward, forward, init_params, sgd_step, Architecture, Forward, GradientSet, LayerShape,
    LayerSpec, NetworkParams, ParamTensor,
};
pub use tensor::{Scalar, Shape3, Tensor3};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("backward called without a cached forward pass")]
    NoCache,
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
