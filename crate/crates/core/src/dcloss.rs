//! Deep-clustering targets and the affinity-matching loss
//! `‖VVᵀ − UUᵀ‖²_F / (TF)²`.
//!
//! The factorized evaluation `‖VᵀV‖² − 2‖VᵀU‖² + ‖UᵀU‖²` costs O(TF·D²)
//! instead of the O((TF)²) of the pairwise form, which is kept as
//! [`dc_loss_naive`] for cross-checking.

use crate::dsp::Spectrogram;
use crate::nncore::{matmul, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported configuration: {0}")]
    Config(String),
}

/// Embeddings V as TF rows of length D (frame-major).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingField {
    pub frames: usize,
    pub bins: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EmbeddingField {
    pub fn from_tensor(t: &Tensor) -> Result<Self, LossError> {
        match t.shape() {
            &[frames, bins, dim] => Ok(Self {
                frames,
                bins,
                dim,
                values: t.data().to_vec(),
            }),
            s => Err(LossError::Shape(format!("embeddings must be T×F×D, got {s:?}"))),
        }
    }

    pub fn rows(&self) -> usize {
        self.frames * self.bins
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }
}

/// One-hot dominant-speaker assignment U, TF rows of length S.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetField {
    pub frames: usize,
    pub bins: usize,
    pub speakers: usize,
    pub values: Vec<f64>,
}

impl TargetField {
    pub fn rows(&self) -> usize {
        self.frames * self.bins
    }

    /// Speaker index owning row `r`.
    pub fn owner(&self, r: usize) -> usize {
        let row = &self.values[r * self.speakers..(r + 1) * self.speakers];
        row.iter().position(|&v| v == 1.0).unwrap_or(0)
    }

    /// Rows `start..start+len` of frames, as a new field.
    pub fn segment(&self, start: usize, len: usize) -> TargetField {
        let end = (start + len).min(self.frames);
        let w = self.bins * self.speakers;
        TargetField {
            frames: end - start,
            bins: self.bins,
            speakers: self.speakers,
            values: self.values[start * w..end * w].to_vec(),
        }
    }

    /// Copy with the speaker columns permuted by `perm`.
    pub fn permute_speakers(&self, perm: &[usize]) -> TargetField {
        let mut out = self.clone();
        for r in 0..self.rows() {
            for (s, &p) in perm.iter().enumerate() {
                out.values[r * self.speakers + s] = self.values[r * self.speakers + p];
            }
        }
        out
    }
}

/// Assigns each bin to the source with the largest magnitude; ties go to
/// the lower speaker index.
pub fn make_targets(sources: &[Spectrogram]) -> Result<TargetField, LossError> {
    if sources.len() != 2 {
        return Err(LossError::Config(format!(
            "only two-speaker targets are supported, got {}",
            sources.len()
        )));
    }
    let frames = sources[0].frames();
    let bins = sources[0].freq_bins();
    if sources.iter().any(|s| s.frames() != frames || s.freq_bins() != bins) {
        return Err(LossError::Shape("source spectrograms differ in shape".into()));
    }
    let speakers = sources.len();
    let mut values = vec![0.0; frames * bins * speakers];
    for r in 0..frames * bins {
        let mut best = 0;
        for s in 1..speakers {
            if sources[s].bins()[r].norm() > sources[best].bins()[r].norm() {
                best = s;
            }
        }
        values[r * speakers + best] = 1.0;
    }
    Ok(TargetField {
        frames,
        bins,
        speakers,
        values,
    })
}

fn check(v: &EmbeddingField, u: &TargetField) -> Result<(), LossError> {
    if v.frames != u.frames || v.bins != u.bins {
        return Err(LossError::Shape(format!(
            "embeddings are {}×{}, targets {}×{}",
            v.frames, v.bins, u.frames, u.bins
        )));
    }
    if v.values.len() != v.rows() * v.dim || u.values.len() != u.rows() * u.speakers {
        return Err(LossError::Shape("field buffers do not match their dimensions".into()));
    }
    if v.rows() == 0 {
        return Err(LossError::Shape("empty field".into()));
    }
    Ok(())
}

fn gram(a: &[f64], ca: usize, b: &[f64], cb: usize, rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; ca * cb];
    matmul(ca, rows, cb, a, true, b, false, &mut out);
    out
}

fn sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Normalized loss and its gradient with respect to V (same layout as V).
pub fn dc_loss(v: &EmbeddingField, u: &TargetField) -> Result<(f64, Vec<f64>), LossError> {
    check(v, u)?;
    let (rows, d, s) = (v.rows(), v.dim, u.speakers);
    let vtv = gram(&v.values, d, &v.values, d, rows);
    let vtu = gram(&v.values, d, &u.values, s, rows);
    let utu = gram(&u.values, s, &u.values, s, rows);
    let norm = (rows as f64).powi(2);
    let loss = (sq(&vtv) - 2.0 * sq(&vtu) + sq(&utu)) / norm;

    // ∂/∂V = 4(V·VᵀV − U·UᵀV) / (TF)²
    let mut grad = vec![0.0; rows * d];
    matmul(rows, d, d, &v.values, false, &vtv, false, &mut grad);
    let mut ut = vec![0.0; rows * d];
    matmul(rows, s, d, &u.values, false, &vtu, true, &mut ut);
    let scale = 4.0 / norm;
    for (g, b) in grad.iter_mut().zip(&ut) {
        *g = scale * (*g - b);
    }
    Ok((loss, grad))
}

/// Pairwise form `Σ (⟨v_i, v_j⟩ − ⟨u_i, u_j⟩)² / (TF)²`.
pub fn dc_loss_naive(v: &EmbeddingField, u: &TargetField) -> Result<f64, LossError> {
    check(v, u)?;
    let rows = v.rows();
    let (d, s) = (v.dim, u.speakers);
    let mut total = 0.0;
    for i in 0..rows {
        let vi = v.row(i);
        let ui = &u.values[i * s..(i + 1) * s];
        for j in 0..rows {
            let vj = v.row(j);
            let uj = &u.values[j * s..(j + 1) * s];
            let a: f64 = (0..d).map(|k| vi[k] * vj[k]).sum();
            let b: f64 = (0..s).map(|k| ui[k] * uj[k]).sum();
            total += (a - b).powi(2);
        }
    }
    Ok(total / (rows as f64).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex64;

    fn spec_from(mags: &[f64]) -> Spectrogram {
        let bins = mags.iter().map(|&m| Complex64::new(0.0, m)).collect();
        Spectrogram::new(mags.len() / 129, bins).unwrap()
    }

    #[test]
    fn louder_source_owns_every_bin() {
        let a = spec_from(&vec![2.0; 129 * 2]);
        let b = spec_from(&vec![1.0; 129 * 2]);
        let u = make_targets(&[a, b]).unwrap();
        assert!((0..u.rows()).all(|r| u.owner(r) == 0 && u.values[r * 2 + 1] == 0.0));
    }

    #[test]
    fn ties_go_to_first_speaker() {
        let a = spec_from(&vec![1.0; 129]);
        let u = make_targets(&[a.clone(), a]).unwrap();
        assert!((0..u.rows()).all(|r| u.owner(r) == 0));
    }

    #[test]
    fn three_sources_are_rejected() {
        let a = spec_from(&vec![1.0; 129]);
        assert!(matches!(
            make_targets(&[a.clone(), a.clone(), a]),
            Err(LossError::Config(_))
        ));
    }

    #[test]
    fn two_bin_example() {
        let v = EmbeddingField {
            frames: 1,
            bins: 2,
            dim: 1,
            values: vec![1.0, 1.0],
        };
        let u = TargetField {
            frames: 1,
            bins: 2,
            speakers: 2,
            values: vec![1.0, 0.0, 0.0, 1.0],
        };
        let (loss, _) = dc_loss(&v, &u).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
        assert!((dc_loss_naive(&v, &u).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_embeddings_have_zero_loss() {
        let u = TargetField {
            frames: 2,
            bins: 3,
            speakers: 2,
            values: vec![1., 0., 0., 1., 0., 1., 1., 0., 1., 0., 0., 1.],
        };
        let d = 4;
        let mut values = vec![0.0; 6 * d];
        for r in 0..6 {
            values[r * d] = u.values[r * 2];
            values[r * d + 1] = u.values[r * 2 + 1];
        }
        let v = EmbeddingField { frames: 2, bins: 3, dim: d, values };
        let (loss, grad) = dc_loss(&v, &u).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| g.abs() < 1e-15));
        assert_eq!(dc_loss(&v, &u.permute_speakers(&[1, 0])).unwrap().0, 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let v = EmbeddingField { frames: 1, bins: 2, dim: 1, values: vec![1.0, 1.0] };
        let u = TargetField { frames: 1, bins: 3, speakers: 2, values: vec![1., 0., 1., 0., 1., 0.] };
        assert!(matches!(dc_loss(&v, &u), Err(LossError::Shape(_))));
    }
}
