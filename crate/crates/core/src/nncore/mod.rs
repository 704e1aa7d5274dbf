//! Dense f64 tensors with tape-based reverse-mode differentiation and the
//! layer primitives of the separation network.
//!
//! A [`Graph`] records one forward pass. Trainable tensors live in a
//! [`ParamStore`] and enter the graph through [`Graph::param`]; after
//! [`Graph::backward`] their gradients are gathered with
//! [`Gradients::param_grads`] and fed to [`AdamState::step`].

mod adam;
mod gemm;
mod graph;
mod lstm;
mod params;
mod tensor;

pub use adam::AdamState;
pub use gemm::matmul;
pub use graph::{Gradients, Graph, LstmWeights, PoolIndices, Var, NORM_FLOOR};
pub use params::{CheckpointManifest, ManifestEntry, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T, NnError> {
    Err(NnError::Shape(msg.into()))
}
