//! Inference: clustering of embeddings into binary masks, masking of the
//! mixture spectrogram, resynthesis and SDR scoring.

mod kmeans;
mod score;

pub use kmeans::{kmeans, KMeansResult};
pub use score::{score_separation, sdr, SeparationScore, SDR_CAP_DB};

use rustfft::num_complex::Complex64;

use crate::dataset::Utterance;
use crate::dcloss::EmbeddingField;
use crate::dsp::{istft, DspError, Spectrogram, Waveform};
use crate::model::{Model, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum SepError {
    #[error("k-means needs at least {k} points, got {points}")]
    TooFewPoints { points: usize, k: usize },
    #[error("reference signal has zero energy")]
    UndefinedReference,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Binary masks, `masks[s][t * bins + f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub frames: usize,
    pub bins: usize,
    pub masks: Vec<Vec<f64>>,
}

impl MaskSet {
    /// Masks from a per-bin owner index.
    pub fn from_labels(frames: usize, bins: usize, speakers: usize, labels: &[usize]) -> Self {
        let mut masks = vec![vec![0.0; frames * bins]; speakers];
        for (i, &l) in labels.iter().enumerate() {
            masks[l][i] = 1.0;
        }
        Self { frames, bins, masks }
    }
}

/// Clusters the TF embedding rows into `speakers` groups.
pub fn make_masks(v: &EmbeddingField, speakers: usize, seed: u64) -> Result<MaskSet, SepError> {
    let km = kmeans(&v.values, v.rows(), v.dim, speakers, seed)?;
    Ok(MaskSet::from_labels(v.frames, v.bins, speakers, &km.labels))
}

/// Element-wise masking of the complex mixture spectrogram.
pub fn apply_masks(y: &Spectrogram, m: &MaskSet) -> Result<Vec<Spectrogram>, SepError> {
    if y.frames() != m.frames || y.freq_bins() != m.bins {
        return Err(SepError::Shape(format!(
            "mask {}×{} for spectrogram {}×{}",
            m.frames,
            m.bins,
            y.frames(),
            y.freq_bins()
        )));
    }
    m.masks
        .iter()
        .map(|mask| {
            let bins: Vec<Complex64> = y.bins().iter().zip(mask).map(|(c, &w)| c * w).collect();
            Ok(Spectrogram::new(y.frames(), bins)?)
        })
        .collect()
}

/// Masks from the dominant-source targets of an utterance.
pub fn ideal_binary_masks(u: &Utterance) -> MaskSet {
    let t = &u.targets;
    let labels: Vec<usize> = (0..t.rows()).map(|r| t.owner(r)).collect();
    MaskSet::from_labels(t.frames, t.bins, t.speakers, &labels)
}

/// Resynthesizes masked estimates at the mixture length.
pub fn reconstruct(u: &Utterance, masks: &MaskSet) -> Result<Vec<Waveform>, SepError> {
    apply_masks(&u.spectrogram, masks)?
        .iter()
        .map(|s| Ok(istft(s, u.mixture.len())?))
        .collect()
}

/// Full inference for one utterance: embed, cluster, mask, resynthesize.
pub fn separate(model: &Model, u: &Utterance, seed: u64) -> Result<Vec<Waveform>, SepError> {
    let v = model.embed(&u.features)?;
    let masks = make_masks(&v, model.spec.speakers, seed)?;
    reconstruct(u, &masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FREQ_BINS;

    fn field(frames: usize, bins: usize, dim: usize, values: Vec<f64>) -> EmbeddingField {
        EmbeddingField { frames, bins, dim, values }
    }

    #[test]
    fn antipodal_embeddings_recover_partition() {
        let truth = [0, 1, 1, 0, 1, 0];
        let values: Vec<f64> = truth.iter().flat_map(|&l| if l == 0 { [1.0, 0.0] } else { [-1.0, 0.0] }).collect();
        let m = make_masks(&field(2, 3, 2, values), 2, 0).unwrap();
        let same = truth.iter().enumerate().all(|(i, &l)| m.masks[l][i] == 1.0);
        let swapped = truth.iter().enumerate().all(|(i, &l)| m.masks[1 - l][i] == 1.0);
        assert!(same || swapped);
    }

    #[test]
    fn identical_embeddings_give_one_full_mask() {
        let m = make_masks(&field(2, 2, 2, [0.6, 0.8].repeat(4)), 2, 0).unwrap();
        let sums: Vec<f64> = m.masks.iter().map(|x| x.iter().sum()).collect();
        assert!(sums.contains(&4.0) && sums.contains(&0.0));
    }

    #[test]
    fn complementary_masks_add_up() {
        let frames = 3;
        let bins: Vec<Complex64> = (0..frames * FREQ_BINS)
            .map(|i| Complex64::new(i as f64, -(i as f64) * 0.5))
            .collect();
        let y = Spectrogram::new(frames, bins).unwrap();
        let labels: Vec<usize> = (0..frames * FREQ_BINS).map(|i| (i * 7 % 3 == 0) as usize).collect();
        let m = MaskSet::from_labels(frames, FREQ_BINS, 2, &labels);
        let parts = apply_masks(&y, &m).unwrap();
        for i in 0..y.bins().len() {
            assert_eq!(parts[0].bins()[i] + parts[1].bins()[i], y.bins()[i]);
        }
        let ones = MaskSet { frames, bins: FREQ_BINS, masks: vec![vec![1.0; frames * FREQ_BINS]] };
        assert_eq!(apply_masks(&y, &ones).unwrap()[0], y);
    }

    #[test]
    fn mask_shape_mismatch() {
        let y = Spectrogram::zeros(2);
        let m = MaskSet::from_labels(3, FREQ_BINS, 2, &vec![0; 3 * FREQ_BINS]);
        assert!(matches!(apply_masks(&y, &m), Err(SepError::Shape(_))));
    }
}
