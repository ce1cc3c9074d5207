//! Small deterministic neural-network engine: convolution, pooling, dense,
//! ReLU and LSTM layers with exact reverse-mode gradients, MSE loss and
//! the Adam optimiser. All arithmetic is `f64`.

pub mod adam;
pub mod layers;
pub mod lstm;
pub mod network;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use layers::ConvSpec;
pub use lstm::LstmShape;
pub use network::{finite_difference_check, Architecture, GradientCheck, LayerSpec, Network, Trace, FD_PARAM_LIMIT};
pub use tensor::Tensor;
