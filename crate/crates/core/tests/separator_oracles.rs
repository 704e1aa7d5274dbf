use dcsep::dataset::{fit_mixture_normalizer, Dataset};
use dcsep::dsp::{stft, synth_corpus, SynthConfig, Waveform, FREQ_BINS};
use dcsep::separator::{apply_masks, ideal_binary_masks, kmeans, reconstruct, score_separation, sdr, MaskSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Lowest within-cluster sum of squares over every two-way labelling.
fn brute_force_inertia(points: &[f64], m: usize, d: usize) -> f64 {
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << m) {
        let mut total = 0.0;
        for side in [0, 1] {
            let members: Vec<usize> = (0..m).filter(|&i| (mask >> i) & 1 == side).collect();
            if members.is_empty() {
                continue;
            }
            for j in 0..d {
                let mean = members.iter().map(|&i| points[i * d + j]).sum::<f64>() / members.len() as f64;
                total += members.iter().map(|&i| (points[i * d + j] - mean).powi(2)).sum::<f64>();
            }
        }
        best = best.min(total);
    }
    best
}

#[test]
fn kmeans_is_near_the_exhaustive_optimum() {
    let mut r = rng(21);
    for case in 0..25 {
        let d = 1 + case % 3;
        let points: Vec<f64> = (0..8 * d).map(|_| r.random_range(-1.0..1.0)).collect();
        let opt = brute_force_inertia(&points, 8, d);
        let got = kmeans(&points, 8, d, 2, case as u64).unwrap().inertia;
        assert!(got >= opt - 1e-9, "{got} below optimum {opt}");
        assert!(got <= opt * 1.05 + 1e-12, "{got} vs optimum {opt}");
    }
}

#[test]
fn sdr_matches_angle_oracle() {
    let mut r = rng(22);
    for _ in 0..200 {
        let n = r.random_range(16..400);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| r.random_range(0.2..1.5) * x + r.random_range(-1.0..1.0)).collect();
        let (ab, aa, bb) = (
            a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>(),
            a.iter().map(|x| x * x).sum::<f64>(),
            b.iter().map(|x| x * x).sum::<f64>(),
        );
        // projection energy over residual energy is cot² of the angle between them
        let cos2 = ab * ab / (aa * bb);
        let oracle = 10.0 * (cos2 / (1.0 - cos2)).log10();
        let got = sdr(&Waveform::new(a), &Waveform::new(b)).unwrap();
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }
}

#[test]
fn masking_is_elementwise() {
    let mut r = rng(23);
    let x = Waveform::new((0..2000).map(|_| r.random_range(-1.0..1.0)).collect());
    let y = stft(&x).unwrap();
    let labels: Vec<usize> = (0..y.frames() * FREQ_BINS).map(|_| r.random_range(0..2)).collect();
    let masks = MaskSet::from_labels(y.frames(), FREQ_BINS, 2, &labels);
    let out = apply_masks(&y, &masks).unwrap();
    for (s, est) in out.iter().enumerate() {
        for (i, (c, e)) in y.bins().iter().zip(est.bins()).enumerate() {
            let w = if labels[i] == s { 1.0 } else { 0.0 };
            assert_eq!(*e, c * w);
        }
    }
}

#[test]
fn ideal_masks_clear_the_floor() {
    let cfg = SynthConfig {
        n_train: 4,
        n_val: 0,
        n_test: 10,
        min_duration_s: 1.0,
        max_duration_s: 2.0,
        source_dir: None,
    };
    let corpus = synth_corpus(&cfg, 5).unwrap();
    let norm = fit_mixture_normalizer(&corpus.train).unwrap();
    let test = Dataset::prepare(&corpus.test, &norm).unwrap();
    let mut total = 0.0;
    for u in &test.items {
        let est = reconstruct(u, &ideal_binary_masks(u)).unwrap();
        total += score_separation(&u.sources, &est, &u.mixture).unwrap().sdr_improvement;
    }
    let mean = total / test.len() as f64;
    assert!(mean > 8.0, "ideal-mask improvement {mean} dB");
}
