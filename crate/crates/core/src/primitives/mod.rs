//! Differentiable building blocks: tensors, a reverse-mode tape, named
//! parameters, layers and finite-difference gradient checks.

pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod ops;
pub mod params;
mod tensor;

pub use gradcheck::{grad_check, grad_check_params};
pub use graph::{Gradients, Graph, NodeId};
pub use layers::{Encoder, EncoderLayer, Ffn, Linear, ProjectedAttention};
pub use ops::{attention, focal, gap, l1_distance, sigmoid};
pub use params::ParamStore;
pub use tensor::Tensor;
