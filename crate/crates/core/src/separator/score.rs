use serde::{Deserialize, Serialize};

use super::SepError;
use crate::dsp::Waveform;

/// SDR values are clamped to ±this many dB.
pub const SDR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationScore {
    /// SDR of each reference source against its matched estimate.
    pub sdr_per_source: Vec<f64>,
    /// SDR of each reference source against the unprocessed mixture.
    pub sdr_mixture_baseline: Vec<f64>,
    pub sdr_improvement: f64,
    /// `permutation[s]` is the estimate matched to source `s`.
    pub permutation: Vec<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Signal-to-distortion ratio of `estimate` after projecting it onto
/// `reference` with a single gain.
pub fn sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64, SepError> {
    let (r, e) = (&reference.samples, &estimate.samples);
    if r.len() != e.len() {
        return Err(SepError::Shape(format!("reference {} vs estimate {} samples", r.len(), e.len())));
    }
    let rr = dot(r, r);
    if rr == 0.0 {
        return Err(SepError::UndefinedReference);
    }
    let alpha = dot(e, r) / rr;
    let target = alpha * alpha * rr;
    let distortion: f64 = r.iter().zip(e).map(|(ri, ei)| (ei - alpha * ri).powi(2)).sum();
    let db = if target == 0.0 {
        -SDR_CAP_DB
    } else if distortion == 0.0 {
        SDR_CAP_DB
    } else {
        10.0 * (target / distortion).log10()
    };
    Ok(db.clamp(-SDR_CAP_DB, SDR_CAP_DB))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Best-permutation SDR of the estimates and the improvement over the mixture.
pub fn score_separation(sources: &[Waveform], estimates: &[Waveform], mixture: &Waveform) -> Result<SeparationScore, SepError> {
    if sources.len() != estimates.len() || sources.is_empty() {
        return Err(SepError::Shape(format!("{} sources vs {} estimates", sources.len(), estimates.len())));
    }
    let n = sources.len();
    let mut table = vec![vec![0.0; n]; n];
    for (s, src) in sources.iter().enumerate() {
        for (e, est) in estimates.iter().enumerate() {
            table[s][e] = sdr(src, est)?;
        }
    }
    let baseline = sources.iter().map(|s| sdr(s, mixture)).collect::<Result<Vec<_>, _>>()?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in permutations(n) {
        let mean = p.iter().enumerate().map(|(s, &e)| table[s][e]).sum::<f64>() / n as f64;
        if best.as_ref().is_none_or(|(b, _)| mean > *b) {
            best = Some((mean, p));
        }
    }
    let (mean, permutation) = best.expect("n >= 1");
    let per: Vec<f64> = permutation.iter().enumerate().map(|(s, &e)| table[s][e]).collect();
    let base_mean = baseline.iter().sum::<f64>() / n as f64;
    Ok(SeparationScore {
        sdr_per_source: per,
        sdr_mixture_baseline: baseline,
        sdr_improvement: mean - base_mean,
        permutation,
    })
}
