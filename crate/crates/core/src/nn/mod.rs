//! Tensors, layers, loss and seeded random streams.

mod kernels;
pub mod layers;
pub mod network;
pub mod rng;
pub mod tensor;

pub use layers::{BatchNorm, Layer, Mode, Weighted};
pub use network::{backward, cross_entropy_loss, forward, ForwardCache, Gradients, Network};
pub use rng::{rng_uniform, RngStream, StreamKey};
pub use tensor::{argmax, Scalar, Tensor};
