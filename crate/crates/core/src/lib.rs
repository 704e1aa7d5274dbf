//! Deep-clustering speech separation with a parallel encoder-decoder CNN and
//! LSTM, plus a Gaussian-process hyperparameter search over the architecture
//! space.
//!
//! The pipeline runs end to end inside this crate:
//!
//! * [`dsp`] turns waveforms into STFT spectrograms and normalized
//!   log-magnitude features, and synthesizes two-speaker training corpora.
//! * [`nncore`] is a small reverse-mode autodiff engine with the layers the
//!   network needs (convolution, pooling/unpooling, LSTM, concatenation).
//! * [`model`] maps a [`model::HyperParams`] point onto a concrete network and
//!   counts its trainable parameters.
//! * [`dcloss`] implements the deep-clustering affinity loss.
//! * [`trainer`] runs curriculum training with early stopping.
//! * [`separator`] clusters embeddings into binary masks, reconstructs the
//!   sources and scores them by SDR improvement.
//! * [`hyperopt`] is the Bayesian optimizer: GP surrogate, acquisition
//!   functions, bounded L-BFGS and the propose/evaluate loop.
//! * [`report`] aggregates trial ledgers into the grouped summaries.

pub mod dataset;
pub mod dcloss;
pub mod dsp;
pub mod hyperopt;
pub mod model;
pub mod nncore;
pub mod report;
pub mod separator;
pub mod trainer;
