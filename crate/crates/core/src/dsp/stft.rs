use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{DspError, Waveform, FRAME_LEN, FREQ_BINS, HOP};

/// Complex T×F time-frequency representation, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: Vec<Complex64>,
    pub frame_len: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn new(frames: usize, bins: Vec<Complex64>) -> Result<Self, DspError> {
        if frames == 0 || bins.len() != frames * FREQ_BINS {
            return Err(DspError::Shape(format!(
                "spectrogram with {frames} frames needs {} bins, got {}",
                frames * FREQ_BINS,
                bins.len()
            )));
        }
        Ok(Self {
            frames,
            bins,
            frame_len: FRAME_LEN,
            hop: HOP,
        })
    }

    pub fn zeros(frames: usize) -> Self {
        Self::new(frames, vec![Complex64::new(0.0, 0.0); frames * FREQ_BINS])
            .expect("frames must be nonzero")
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn freq_bins(&self) -> usize {
        FREQ_BINS
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.bins[t * FREQ_BINS + f]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }

    pub fn scale(&self, factor: f64) -> Spectrogram {
        Spectrogram {
            bins: self.bins.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    /// Maximum number of samples a synthesis of this spectrogram covers.
    pub fn max_samples(&self) -> usize {
        (self.frames - 1) * self.hop + self.frame_len
    }
}

/// Periodic Hann window, square-rooted. Its square sums to 2 at 75% overlap.
pub fn sqrt_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| (0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).sqrt())
        .collect()
}

pub fn stft(w: &Waveform) -> Result<Spectrogram, DspError> {
    let len = w.len();
    if len < FRAME_LEN {
        return Err(DspError::InputTooShort {
            len,
            frame_len: FRAME_LEN,
        });
    }
    let frames = (len - FRAME_LEN) / HOP + 1;
    let window = sqrt_hann(FRAME_LEN);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FRAME_LEN);

    let mut bins = Vec::with_capacity(frames * FREQ_BINS);
    let mut buf = vec![Complex64::new(0.0, 0.0); FRAME_LEN];
    for t in 0..frames {
        let start = t * HOP;
        for (n, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(w.samples[start + n] * window[n], 0.0);
        }
        fft.process(&mut buf);
        bins.extend_from_slice(&buf[..FREQ_BINS]);
    }
    Spectrogram::new(frames, bins)
}

/// Weighted overlap-add synthesis with the sqrt-Hann synthesis window.
///
/// Each sample is divided by the summed squared window covering it; the
/// first and last few samples (window sum below 1e-3) use the floor instead.
/// The output is truncated or zero-padded to `out_len` samples.
pub fn istft(s: &Spectrogram, out_len: usize) -> Result<Waveform, DspError> {
    if s.frame_len != FRAME_LEN || s.hop != HOP || s.bins.len() != s.frames * FREQ_BINS {
        return Err(DspError::Shape("malformed spectrogram".into()));
    }
    let total = s.max_samples();
    let window = sqrt_hann(FRAME_LEN);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(FRAME_LEN);

    let mut acc = vec![0.0; total];
    let mut wsum = vec![0.0; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); FRAME_LEN];
    for t in 0..s.frames {
        let frame = &s.bins[t * FREQ_BINS..(t + 1) * FREQ_BINS];
        buf[..FREQ_BINS].copy_from_slice(frame);
        // Hermitian extension; DC and Nyquist must be real for a real signal.
        buf[0].im = 0.0;
        buf[FREQ_BINS - 1].im = 0.0;
        for k in FREQ_BINS..FRAME_LEN {
            buf[k] = frame[FRAME_LEN - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * HOP;
        for n in 0..FRAME_LEN {
            acc[start + n] += buf[n].re / FRAME_LEN as f64 * window[n];
            wsum[start + n] += window[n] * window[n];
        }
    }
    let mut samples: Vec<f64> = acc.iter().zip(&wsum).take(out_len).map(|(a, w)| a / w.max(1e-3)).collect();
    samples.resize(out_len, 0.0);
    Ok(Waveform::new(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn short_signal_is_rejected() {
        let err = stft(&Waveform::zeros(FRAME_LEN - 1)).unwrap_err();
        assert!(matches!(err, DspError::InputTooShort { .. }));
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let s = stft(&Waveform::zeros(8000)).unwrap();
        // floor((8000 - 256) / 64) + 1
        assert_eq!(s.frames(), 122);
        assert_eq!(s.freq_bins(), 129);
        assert!(s.bins().iter().all(|c| c.norm() == 0.0));
        let w = istft(&Spectrogram::zeros(10), 500).unwrap();
        assert!(w.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let w = Waveform::new(
            (0..8000)
                .map(|n| (2.0 * PI * 1000.0 * n as f64 / 8000.0).sin())
                .collect(),
        );
        let s = stft(&w).unwrap();
        let window = sqrt_hann(FRAME_LEN);
        for t in [0, 17, 120] {
            let mags: Vec<f64> = (0..FREQ_BINS).map(|f| s.get(t, f).norm()).collect();
            let peak = (0..FREQ_BINS)
                .max_by(|&a, &b| mags[a].total_cmp(&mags[b]))
                .unwrap();
            assert_eq!(peak, 32);
            // direct DFT of the windowed frame
            for f in [0, 31, 32, 33, 100] {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..FRAME_LEN {
                    let x = w.samples[t * HOP + n] * window[n];
                    let ang = -2.0 * PI * (f * n) as f64 / FRAME_LEN as f64;
                    acc += Complex64::new(x * ang.cos(), x * ang.sin());
                }
                assert!((acc - s.get(t, f)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn window_is_cola_at_quarter_hop() {
        let w = sqrt_hann(FRAME_LEN);
        for n in 0..HOP {
            let sum: f64 = (0..FRAME_LEN / HOP).map(|k| w[n + k * HOP].powi(2)).sum();
            assert!((sum - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_recovers_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Waveform::new((0..8000).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y = istft(&stft(&x).unwrap(), x.len()).unwrap();
        let interior = FRAME_LEN..(x.len() - FRAME_LEN);
        let num: f64 = interior
            .clone()
            .map(|n| (x.samples[n] - y.samples[n]).powi(2))
            .sum();
        let den: f64 = interior.map(|n| x.samples[n].powi(2)).sum();
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn istft_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Waveform::new((0..2000).map(|_| rng.random_range(-1.0..1.0)).collect());
        let s = stft(&x).unwrap();
        let a = istft(&s, 1500).unwrap();
        let b = istft(&s.scale(2.0), 1500).unwrap();
        for (p, q) in a.samples.iter().zip(&b.samples) {
            assert!((2.0 * p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn istft_pads_uncovered_tail() {
        let x = Waveform::new((0..300).map(|n| (n as f64 * 0.1).sin()).collect());
        let s = stft(&x).unwrap();
        assert_eq!(s.max_samples(), 256);
        let y = istft(&s, 300).unwrap();
        assert_eq!(y.len(), 300);
        assert!(y.samples[256..].iter().all(|&v| v == 0.0));
        assert_eq!(istft(&s, 100).unwrap().len(), 100);
    }
}
