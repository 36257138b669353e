//! Tape-based reverse-mode automatic differentiation over dense f64
//! tensors, with the layer primitives (matmul, stride-2 conv, ELU/ReLU/Tanh,
//! layer norm, reductions) and the Adam optimizer a small world model needs.
//!
//! The design is a single append-only tape per training step: forward calls
//! on a recording [`Graph`] save whatever their VJPs need, [`Graph::backward`]
//! replays the tape in reverse. Tensors without a node id are plain values;
//! running the same ops through [`Graph::inference`] skips the tape entirely.

mod adam;
mod fd;
mod graph;
mod kernels;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use fd::{finite_difference_grad, max_rel_error};
pub use graph::{Error, Graph};
pub use kernels::{ConvGeom, CONV_STRIDE};
pub use tensor::{NodeId, Tensor};
