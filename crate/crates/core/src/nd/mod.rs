//! Minimal dense/convolutional reverse-mode differentiation core with an
//! Adam optimizer and a binary checkpoint container. 32-bit floats
//! throughout.

pub mod checkpoint;
pub mod conv;
pub mod gemm;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod tensor;

pub use graph::{sigmoid, softplus, Graph, NodeId};
pub use params::{init_tensor, AdamConfig, Init, ParamSet};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
