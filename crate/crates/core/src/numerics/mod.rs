//! Minimal dense-tensor arithmetic with reverse-mode differentiation.
//!
//! [`Tensor`] is the persistent value type (parameters, inputs); [`Graph`]
//! is a define-by-run tape: forward ops append nodes, [`Graph::backward`]
//! replays them in reverse to populate gradients. [`AdamState`] applies
//! the ADAM update to tensors whose gradients have been pulled out of a
//! graph.

mod adam;
mod graph;
mod tensor;

pub mod gradcheck;

pub use adam::AdamState;
pub use graph::{Graph, TensorId};
pub use tensor::Tensor;
