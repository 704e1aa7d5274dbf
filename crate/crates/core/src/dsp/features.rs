use serde::{Deserialize, Serialize};

use super::{DspError, Spectrogram, FREQ_BINS, LOG_EPS};

/// Normalized decimal log-magnitude features, T×F, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeq {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl FeatureSeq {
    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.bins + f]
    }

    /// Frames `start..start + len` as a new sequence.
    pub fn segment(&self, start: usize, len: usize) -> FeatureSeq {
        let end = (start + len).min(self.frames);
        FeatureSeq {
            frames: end - start,
            bins: self.bins,
            values: self.values[start * self.bins..end * self.bins].to_vec(),
        }
    }
}

/// Per-frequency mean and standard deviation of the log-magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Identity normalizer (zero mean, unit std).
    pub fn identity(bins: usize) -> Self {
        Self {
            mean: vec![0.0; bins],
            std: vec![1.0; bins],
        }
    }
}

/// Unnormalized `log10(|Y| + eps)` per bin.
pub fn log_magnitude(s: &Spectrogram) -> Vec<f64> {
    s.bins().iter().map(|c| (c.norm() + LOG_EPS).log10()).collect()
}

pub fn log_features(s: &Spectrogram, n: &Normalizer) -> Result<FeatureSeq, DspError> {
    if n.mean.len() != FREQ_BINS || n.std.len() != FREQ_BINS {
        return Err(DspError::Shape(format!(
            "normalizer has {} bins, spectrogram has {FREQ_BINS}",
            n.mean.len()
        )));
    }
    let mut values = log_magnitude(s);
    for frame in values.chunks_mut(FREQ_BINS) {
        for (f, v) in frame.iter_mut().enumerate() {
            *v = (*v - n.mean[f]) / n.std[f];
        }
    }
    Ok(FeatureSeq {
        frames: s.frames(),
        bins: FREQ_BINS,
        values,
    })
}

/// Fits per-frequency statistics over every frame of every spectrogram.
/// The standard deviation is the population value, floored at 1e-8.
pub fn fit_normalizer<'a, I>(corpus: I) -> Result<Normalizer, DspError>
where
    I: IntoIterator<Item = &'a Spectrogram>,
{
    let mut count = 0usize;
    let mut sum = vec![0.0; FREQ_BINS];
    let mut sumsq = vec![0.0; FREQ_BINS];
    // Shifted accumulation keeps the single pass numerically stable.
    let mut shift: Option<Vec<f64>> = None;
    for s in corpus {
        let logmag = log_magnitude(s);
        let shift = shift.get_or_insert_with(|| logmag[..FREQ_BINS].to_vec());
        for frame in logmag.chunks(FREQ_BINS) {
            for f in 0..FREQ_BINS {
                let d = frame[f] - shift[f];
                sum[f] += d;
                sumsq[f] += d * d;
            }
        }
        count += s.frames();
    }
    let shift = shift.ok_or(DspError::EmptyCorpus)?;
    let n = count as f64;
    let mut mean = vec![0.0; FREQ_BINS];
    let mut std = vec![0.0; FREQ_BINS];
    for f in 0..FREQ_BINS {
        let m = sum[f] / n;
        mean[f] = shift[f] + m;
        std[f] = (sumsq[f] / n - m * m).max(0.0).sqrt().max(1e-8);
    }
    Ok(Normalizer { mean, std })
}
