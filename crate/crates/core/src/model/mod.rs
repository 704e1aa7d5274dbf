//! Architecture description and the parallel CNN/LSTM embedding network.
//!
//! [`HyperParams`] is one point of the search space. [`resolve`] turns it
//! into a concrete [`ModelSpec`]; [`count_params`] sizes it without
//! allocating; [`build`] allocates and initializes the weights.

mod hyperparams;
mod net;
mod spec;

pub use hyperparams::{ranges, Concat, Direction, HyperParams, Upsampling, FIELD_NAMES};
pub use net::{build, Model};
pub use spec::{
    count_params, param_layout, resolve, ConvLayer, EncoderLayer, LstmLayer, ModelSpec, ParamPartition,
};

/// Embedding dimension used unless configured otherwise.
pub const DEFAULT_EMBED_DIM: usize = 20;
/// Speakers per mixture.
pub const SPEAKERS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("hyperparameter out of range: {0}")]
    Range(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] crate::nncore::NnError),
}
