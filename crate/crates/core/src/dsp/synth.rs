//! Synthetic two-speaker corpus.
//!
//! Each mixture combines one utterance from each of two pseudo-speaker
//! families. A family is a harmonic-plus-noise voice with its own
//! fundamental-frequency range and formant envelope; the ranges are
//! disjoint so the two families are separable from spectral cues alone.
//! Sources are snapped to the 16-bit grid before summation, so a mixture
//! equals the sum of its sources exactly, in memory and after a WAV roundtrip.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::wav::snap_i16;
use super::{read_wav, stft, DspError, Waveform, FRAME_LEN, FREQ_BINS, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Optional directory of mono 8 kHz WAV files used as the source pool
    /// instead of the pseudo-speakers. Subdirectories are treated as speakers.
    pub source_dir: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_val: 50,
            n_test: 50,
            min_duration_s: 1.0,
            max_duration_s: 2.0,
            source_dir: None,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), DspError> {
        let ok = self.min_duration_s.is_finite()
            && self.max_duration_s.is_finite()
            && self.min_duration_s > 0.0
            && self.min_duration_s <= self.max_duration_s;
        if !ok {
            return Err(DspError::Config(format!(
                "invalid duration range [{}, {}] s",
                self.min_duration_s, self.max_duration_s
            )));
        }
        let min_samples = (self.min_duration_s * SAMPLE_RATE as f64).round() as usize;
        if min_samples < FRAME_LEN {
            return Err(DspError::Config(format!(
                "minimum duration {} s is shorter than one analysis frame",
                self.min_duration_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub id: String,
    pub mixture: Waveform,
    pub sources: Vec<Waveform>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub train: Vec<Mixture>,
    pub val: Vec<Mixture>,
    pub test: Vec<Mixture>,
}

impl Corpus {
    pub fn splits(&self) -> [(&'static str, &[Mixture]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

struct Family {
    f0_range: (f64, f64),
    /// (center Hz, half-bandwidth Hz, gain)
    formants: [(f64, f64, f64); 3],
    tilt: f64,
}

const FAMILIES: [Family; 2] = [
    Family {
        f0_range: (85.0, 140.0),
        formants: [(450.0, 120.0, 1.0), (1000.0, 160.0, 0.5), (2200.0, 250.0, 0.12)],
        tilt: 1.6,
    },
    Family {
        f0_range: (190.0, 300.0),
        formants: [(800.0, 150.0, 0.5), (1900.0, 220.0, 1.0), (3000.0, 300.0, 0.6)],
        tilt: 0.4,
    },
];

const MAX_HARMONIC_HZ: f64 = 3900.0;

fn envelope_gain(freq: f64, formants: &[(f64, f64, f64)], tilt: f64) -> f64 {
    let resonance: f64 = formants
        .iter()
        .map(|&(c, b, g)| g / (1.0 + ((freq - c) / b).powi(2)))
        .sum();
    (resonance + 0.02) * (1.0 + freq / 1000.0).powf(-tilt)
}

/// One utterance of a pseudo-speaker from `family`, `len` samples long.
fn pseudo_utterance(family: &Family, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let base_f0 = rng.random_range(family.f0_range.0..family.f0_range.1);
    let formant_scale = rng.random_range(0.92..1.08);
    let mut out = vec![0.0; len];
    let mut pos = (rng.random_range(0.0..0.08) * fs) as usize;
    while pos < len {
        let syl_len = ((rng.random_range(0.12..0.30) * fs) as usize).min(len - pos);
        let f0_start = (base_f0 * rng.random_range(0.9..1.1))
            .clamp(family.f0_range.0, family.f0_range.1);
        let f0_end = (base_f0 * rng.random_range(0.9..1.1))
            .clamp(family.f0_range.0, family.f0_range.1);
        let formants: Vec<(f64, f64, f64)> = family
            .formants
            .iter()
            .map(|&(c, b, g)| (c * formant_scale * rng.random_range(0.85..1.15), b, g))
            .collect();
        let f0_mid = 0.5 * (f0_start + f0_end);
        let n_harm = (MAX_HARMONIC_HZ / f0_start.max(f0_end)).floor() as usize;
        let amps: Vec<f64> = (1..=n_harm)
            .map(|h| envelope_gain(h as f64 * f0_mid, &formants, family.tilt))
            .collect();
        let mut phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let ramp = (0.02 * fs) as usize;
        for n in 0..syl_len {
            let frac = n as f64 / syl_len.max(1) as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            let edge = n.min(syl_len - 1 - n);
            let env = if edge < ramp {
                (0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()).max(0.0)
            } else {
                1.0
            };
            let mut v = 0.0;
            for (h, (phase, amp)) in phases.iter_mut().zip(&amps).enumerate() {
                *phase += 2.0 * PI * (h + 1) as f64 * f0 / fs;
                v += amp * phase.sin();
            }
            let noise = rng.random_range(-1.0..1.0) * 0.03;
            out[pos + n] = env * (v + noise);
        }
        pos += syl_len + (rng.random_range(0.02..0.12) * fs) as usize;
    }
    out
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Scales both sources to their target levels, snaps them to the 16-bit
/// grid and sums them.
fn assemble(id: String, raw: [Vec<f64>; 2], rng: &mut ChaCha8Rng) -> Mixture {
    let gains: Vec<f64> = raw
        .iter()
        .map(|s| {
            let level = 0.05 * 10f64.powf(rng.random_range(-2.5..2.5) / 20.0);
            level / rms(s).max(1e-12)
        })
        .collect();
    let peak = (0..raw[0].len())
        .map(|n| (raw[0][n] * gains[0]).abs() + (raw[1][n] * gains[1]).abs())
        .fold(0.0, f64::max);
    let limit = if peak > 0.9 { 0.9 / peak } else { 1.0 };
    let sources: Vec<Waveform> = raw
        .iter()
        .zip(&gains)
        .map(|(s, g)| Waveform::new(s.iter().map(|v| snap_i16(v * g * limit)).collect()))
        .collect();
    let mixture = sources[0].add(&sources[1]).expect("equal lengths");
    Mixture {
        id,
        mixture,
        sources,
    }
}

fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Generates train/validation/test mixtures. Pure function of `(cfg, seed)`.
pub fn synth_corpus(cfg: &SynthConfig, seed: u64) -> Result<Corpus, DspError> {
    cfg.validate()?;
    let pool = match &cfg.source_dir {
        Some(dir) => Some(SourcePool::load(dir)?),
        None => None,
    };
    let counts = [cfg.n_train, cfg.n_val, cfg.n_test];
    let names = ["train", "val", "test"];
    let mut splits: [Vec<Mixture>; 3] = Default::default();
    let mut index = 0u64;
    for (k, (&count, name)) in counts.iter().zip(names).enumerate() {
        for i in 0..count {
            let mut rng = item_rng(seed, index);
            index += 1;
            let duration = rng.random_range(cfg.min_duration_s..=cfg.max_duration_s);
            let len = (duration * SAMPLE_RATE as f64).round() as usize;
            let raw = match &pool {
                Some(pool) => pool.draw(len, &mut rng)?,
                None => [
                    pseudo_utterance(&FAMILIES[0], len, &mut rng),
                    pseudo_utterance(&FAMILIES[1], len, &mut rng),
                ],
            };
            splits[k].push(assemble(format!("{name}_{i:05}"), raw, &mut rng));
        }
    }
    let [train, val, test] = splits;
    Ok(Corpus { train, val, test })
}

struct SourcePool {
    speakers: Vec<Vec<Waveform>>,
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), DspError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    Ok(())
}

impl SourcePool {
    fn load(dir: &Path) -> Result<Self, DspError> {
        let mut files = Vec::new();
        collect_wavs(dir, &mut files)?;
        let mut by_speaker: BTreeMap<PathBuf, Vec<Waveform>> = BTreeMap::new();
        for path in files {
            let w = read_wav(&path)?;
            if w.len() >= FRAME_LEN {
                let speaker = path.parent().map(Path::to_path_buf).unwrap_or_default();
                by_speaker.entry(speaker).or_default().push(w);
            }
        }
        let mut speakers: Vec<Vec<Waveform>> = by_speaker.into_values().collect();
        if speakers.len() == 1 {
            // flat directory: every file is its own speaker
            speakers = speakers.pop().unwrap().into_iter().map(|w| vec![w]).collect();
        }
        if speakers.len() < 2 {
            return Err(DspError::Config(format!(
                "source directory {} needs at least two usable wav files",
                dir.display()
            )));
        }
        Ok(Self { speakers })
    }

    fn draw(&self, len: usize, rng: &mut ChaCha8Rng) -> Result<[Vec<f64>; 2], DspError> {
        let a = rng.random_range(0..self.speakers.len());
        let mut b = rng.random_range(0..self.speakers.len() - 1);
        if b >= a {
            b += 1;
        }
        let mut pick = |spk: usize| {
            let utts = &self.speakers[spk];
            let w = &utts[rng.random_range(0..utts.len())];
            let take = len.min(w.len());
            let offset = rng.random_range(0..=w.len() - take);
            w.samples[offset..offset + take].to_vec()
        };
        let mut first = pick(a);
        let mut second = pick(b);
        let n = first.len().min(second.len());
        first.truncate(n);
        second.truncate(n);
        Ok([first, second])
    }
}

/// Power-weighted mean frequency of a signal, in Hz.
pub fn spectral_centroid(w: &Waveform) -> Result<f64, DspError> {
    let s = stft(w)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for frame in s.bins().chunks(FREQ_BINS) {
        for (f, c) in frame.iter().enumerate() {
            let p = c.norm_sqr();
            num += p * f as f64 * SAMPLE_RATE as f64 / FRAME_LEN as f64;
            den += p;
        }
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 6,
            n_val: 2,
            n_test: 2,
            min_duration_s: 0.5,
            max_duration_s: 1.0,
            source_dir: None,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synth_corpus(&small(), 7).unwrap();
        let b = synth_corpus(&small(), 7).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&small(), 8).unwrap();
        assert_ne!(a.train[0].mixture, c.train[0].mixture);
    }

    #[test]
    fn mixture_is_exact_sum() {
        let corpus = synth_corpus(&small(), 1).unwrap();
        for (_, split) in corpus.splits() {
            for m in split {
                assert_eq!(m.sources.len(), 2);
                for n in 0..m.mixture.len() {
                    assert_eq!(m.mixture.samples[n], m.sources[0].samples[n] + m.sources[1].samples[n]);
                }
                assert!(m.mixture.samples.iter().all(|x| x.abs() < 1.0));
            }
        }
    }

    #[test]
    fn invalid_durations_are_rejected() {
        let mut cfg = small();
        cfg.min_duration_s = 2.0;
        cfg.max_duration_s = 1.0;
        assert!(matches!(synth_corpus(&cfg, 0), Err(DspError::Config(_))));
        cfg.min_duration_s = 0.01;
        cfg.max_duration_s = 0.02;
        assert!(matches!(synth_corpus(&cfg, 0), Err(DspError::Config(_))));
    }

    #[test]
    fn families_have_separated_centroids() {
        let cfg = SynthConfig {
            n_train: 40,
            n_val: 0,
            n_test: 0,
            ..small()
        };
        let corpus = synth_corpus(&cfg, 11).unwrap();
        let stats = |k: usize| {
            let c: Vec<f64> = corpus
                .train
                .iter()
                .map(|m| spectral_centroid(&m.sources[k]).unwrap())
                .collect();
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            let sd = (c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
            (mean, sd)
        };
        let (m0, s0) = stats(0);
        let (m1, s1) = stats(1);
        assert!((m1 - m0).abs() > 2.0 * s0.max(s1), "{m0}±{s0} vs {m1}±{s1}");
    }

    #[test]
    fn wav_pool_mixtures() {
        let dir = tempfile::tempdir().unwrap();
        for spk in ["a", "b"] {
            std::fs::create_dir(dir.path().join(spk)).unwrap();
            let w = Waveform::new(
                (0..6000)
                    .map(|n| snap_i16(0.3 * (n as f64 * if spk == "a" { 0.05 } else { 0.3 }).sin()))
                    .collect(),
            );
            super::super::write_wav(&dir.path().join(spk).join("u.wav"), &w).unwrap();
        }
        let cfg = SynthConfig {
            source_dir: Some(dir.path().to_path_buf()),
            ..small()
        };
        let corpus = synth_corpus(&cfg, 2).unwrap();
        assert_eq!(corpus.train.len(), 6);
        for m in &corpus.train {
            let sum = m.sources[0].add(&m.sources[1]).unwrap();
            assert_eq!(sum, m.mixture);
        }
    }
}
