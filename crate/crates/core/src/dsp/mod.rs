//! Signal I/O, STFT analysis/synthesis, log-magnitude features and the
//! synthetic two-speaker corpus generator.
//!
//! All signals are mono at 8 kHz. Frames are 32 ms (256 samples) with an
//! 8 ms hop (64 samples), giving 129 frequency bins per frame.

mod features;
mod stft;
mod synth;
mod wav;

use std::path::PathBuf;

pub use features::{fit_normalizer, log_features, log_magnitude, FeatureSeq, Normalizer};
pub use stft::{istft, stft, sqrt_hann, Spectrogram};
pub use synth::{spectral_centroid, synth_corpus, Corpus, Mixture, SynthConfig};
pub use wav::{read_wav, write_wav};

/// Sample rate of every waveform handled by the crate.
pub const SAMPLE_RATE: u32 = 8000;
/// Analysis frame length in samples (32 ms).
pub const FRAME_LEN: usize = 256;
/// Hop between consecutive frames in samples (8 ms).
pub const HOP: usize = 64;
/// Number of non-negative frequency bins per frame.
pub const FREQ_BINS: usize = FRAME_LEN / 2 + 1;
/// Offset added to magnitudes before taking `log10`.
pub const LOG_EPS: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("signal of {len} samples is shorter than one frame ({frame_len})")]
    InputTooShort { len: usize, frame_len: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot fit a normalizer on an empty corpus")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported wav file {path:?}: {reason}")]
    WavFormat { path: PathBuf, reason: String },
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A mono 8 kHz signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    /// Sample-wise sum of two equally long signals.
    pub fn add(&self, other: &Waveform) -> Result<Waveform, DspError> {
        if self.len() != other.len() {
            return Err(DspError::Shape(format!(
                "cannot add waveforms of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Waveform::new(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }
}
