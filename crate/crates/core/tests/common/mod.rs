//! Helpers shared by the integration suites: finite-difference gradient
//! checks and independent reference implementations.

#![allow(dead_code)]

use dcsep::dcloss::{dc_loss, EmbeddingField, TargetField};
use dcsep::dsp::FeatureSeq;
use dcsep::hyperopt::GpState;
use dcsep::model::{build, resolve, Concat, Direction, HyperParams, Upsampling};
use dcsep::nncore::{Graph, LstmWeights, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Relative error with a small absolute floor for entries that vanish.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Values of magnitude in [0.05, 1] with random sign, away from ReLU's kink.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Distinct values at least 0.01 apart, so max-pool winners are stable
/// under a finite-difference step.
pub fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape.to_vec(), order.iter().map(|&k| k as f64 * 0.01 - 0.3).collect()).unwrap()
}

/// Checks the gradient of `Σ w ⊙ f(inputs)` for a random `w` against
/// central differences on every input element. Returns the largest
/// relative error.
pub fn check_op<F>(rng: &mut ChaCha8Rng, inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor], w: Option<&Tensor>| -> (f64, Option<Vec<Tensor>>, Tensor) {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.var(x.clone())).collect();
        let out = f(&mut g, &vars);
        let shape = g.value(out).shape().to_vec();
        let w = w.cloned().unwrap_or_else(|| Tensor::zeros(&shape));
        let loss = g.dot_const(out, w.clone()).unwrap();
        let value = g.value(loss).data()[0];
        let grads = g.backward(loss, Tensor::scalar(1.0)).unwrap();
        let gs = vars
            .iter()
            .zip(xs)
            .map(|(v, x)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
            .collect();
        (value, Some(gs), w)
    };
    // output shape for the random weights
    let (_, _, zero_w) = eval(inputs, None);
    let w = uniform(rng, zero_w.shape(), 1.0);
    let (_, analytic, _) = eval(inputs, Some(&w));
    let analytic = analytic.unwrap();

    let mut worst: f64 = 0.0;
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for j in 0..xs[i].len() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + FD_STEP;
            let plus = eval(&xs, Some(&w)).0;
            xs[i].data_mut()[j] = orig - FD_STEP;
            let minus = eval(&xs, Some(&w)).0;
            xs[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[i].data()[j], numeric));
        }
    }
    worst
}

fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

pub fn case_conv2d(rng: &mut ChaCha8Rng) -> f64 {
    let (t, f, ci, co) = (dims(rng, 1, 6), dims(rng, 1, 6), dims(rng, 1, 3), dims(rng, 1, 3));
    let (kt, kf) = (dims(rng, 1, 4), dims(rng, 1, 4));
    let inputs = [uniform(rng, &[t, f, ci], 1.0), uniform(rng, &[kt, kf, ci, co], 0.5), uniform(rng, &[co], 0.5)];
    check_op(rng, &inputs, |g, v| g.conv2d(v[0], v[1], v[2]).unwrap())
}

pub fn case_relu(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [dims(rng, 1, 5), dims(rng, 1, 5), dims(rng, 1, 3)];
    let x = away_from_zero(rng, &shape);
    check_op(rng, &[x], |g, v| g.relu(v[0]))
}

pub fn case_maxpool(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [dims(rng, 1, 7), dims(rng, 1, 7), dims(rng, 1, 3)];
    let (pt, pf) = (dims(rng, 1, 2), dims(rng, 1, 2));
    let x = distinct(rng, &shape);
    check_op(rng, &[x], |g, v| g.maxpool(v[0], pt, pf).unwrap().0)
}

pub fn case_unpool(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [dims(rng, 1, 7), dims(rng, 1, 7), dims(rng, 1, 3)];
    let (pt, pf) = (dims(rng, 1, 2), dims(rng, 1, 2));
    let reference = distinct(rng, &shape);
    let mut g0 = Graph::new();
    let r = g0.constant(reference);
    let (_, idx) = g0.maxpool(r, pt, pf).unwrap();
    let x = uniform(rng, &idx.out_shape, 1.0);
    check_op(rng, &[x], |g, v| g.unpool(v[0], &idx).unwrap())
}

pub fn case_upsample(rng: &mut ChaCha8Rng) -> f64 {
    let (t, f, c) = (dims(rng, 1, 4), dims(rng, 1, 4), dims(rng, 1, 3));
    let (rt, rf) = (dims(rng, 1, 3), dims(rng, 1, 3));
    let out_t = rng.random_range((t - 1) * rt + 1..=t * rt);
    let out_f = rng.random_range((f - 1) * rf + 1..=f * rf);
    let x = uniform(rng, &[t, f, c], 1.0);
    check_op(rng, &[x], |g, v| g.upsample_nearest(v[0], rt, rf, out_t, out_f).unwrap())
}

pub fn case_concat_last(rng: &mut ChaCha8Rng) -> f64 {
    let lead: Vec<usize> = (0..dims(rng, 1, 2)).map(|_| dims(rng, 1, 4)).collect();
    let mut sa = lead.clone();
    sa.push(dims(rng, 1, 3));
    let mut sb = lead;
    sb.push(dims(rng, 1, 3));
    let inputs = [uniform(rng, &sa, 1.0), uniform(rng, &sb, 1.0)];
    check_op(rng, &inputs, |g, v| g.concat_last(v[0], v[1]).unwrap())
}

pub fn case_concat_broadcast(rng: &mut ChaCha8Rng) -> f64 {
    let (t, f, c, n) = (dims(rng, 1, 5), dims(rng, 1, 5), dims(rng, 1, 3), dims(rng, 1, 3));
    let inputs = [uniform(rng, &[t, f, c], 1.0), uniform(rng, &[t, n], 1.0)];
    check_op(rng, &inputs, |g, v| g.concat_broadcast(v[0], v[1]).unwrap())
}

pub fn case_concat_flatten(rng: &mut ChaCha8Rng) -> f64 {
    let (t, f, c, n) = (dims(rng, 1, 5), dims(rng, 1, 5), dims(rng, 1, 3), dims(rng, 1, 3));
    let inputs = [uniform(rng, &[t, f, c], 1.0), uniform(rng, &[t, n], 1.0)];
    check_op(rng, &inputs, |g, v| g.concat_flatten(v[0], v[1]).unwrap())
}

pub fn case_linear(rng: &mut ChaCha8Rng) -> f64 {
    let (i, o) = (dims(rng, 1, 5), dims(rng, 1, 4));
    let mut shape: Vec<usize> = (0..dims(rng, 1, 2)).map(|_| dims(rng, 1, 4)).collect();
    shape.push(i);
    let inputs = [uniform(rng, &shape, 1.0), uniform(rng, &[i, o], 1.0), uniform(rng, &[o], 1.0)];
    check_op(rng, &inputs, |g, v| g.linear(v[0], v[1], v[2]).unwrap())
}

fn lstm_inputs(rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    let (t, d, n) = (dims(rng, 1, 6), dims(rng, 1, 4), dims(rng, 1, 4));
    vec![
        uniform(rng, &[t, d], 1.0),
        uniform(rng, &[d, 4 * n], 0.7),
        uniform(rng, &[n, 4 * n], 0.7),
        uniform(rng, &[4 * n], 0.5),
    ]
}

pub fn case_lstm(rng: &mut ChaCha8Rng) -> f64 {
    let reverse = rng.random::<bool>();
    let inputs = lstm_inputs(rng);
    check_op(rng, &inputs, |g, v| {
        g.lstm(v[0], LstmWeights { w_ih: v[1], w_hh: v[2], b: v[3] }, reverse).unwrap()
    })
}

pub fn case_lstm_bidirectional(rng: &mut ChaCha8Rng) -> f64 {
    let mut inputs = lstm_inputs(rng);
    let n = inputs[2].shape()[0];
    let d = inputs[0].shape()[1];
    inputs.push(uniform(rng, &[d, 4 * n], 0.7));
    inputs.push(uniform(rng, &[n, 4 * n], 0.7));
    inputs.push(uniform(rng, &[4 * n], 0.5));
    check_op(rng, &inputs, |g, v| {
        let fw = LstmWeights { w_ih: v[1], w_hh: v[2], b: v[3] };
        let bw = LstmWeights { w_ih: v[4], w_hh: v[5], b: v[6] };
        g.lstm_layer(v[0], fw, Some(bw)).unwrap()
    })
}

pub fn case_reshape(rng: &mut ChaCha8Rng) -> f64 {
    let (a, b, c) = (dims(rng, 1, 4), dims(rng, 1, 4), dims(rng, 1, 4));
    let x = uniform(rng, &[a, b, c], 1.0);
    check_op(rng, &[x], |g, v| g.reshape(v[0], &[a * b, c]).unwrap())
}

pub fn case_unit_normalize(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [dims(rng, 1, 4), dims(rng, 1, 4), dims(rng, 1, 5)];
    let x = away_from_zero(rng, &shape);
    check_op(rng, &[x], |g, v| g.unit_normalize(v[0]))
}

pub fn case_dot_const(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [dims(rng, 1, 4), dims(rng, 1, 4)];
    let x = uniform(rng, &shape, 1.0);
    let w = uniform(rng, &shape, 1.0);
    // the harness adds its own weighting of the scalar output
    check_op(rng, &[x], move |g, v| g.dot_const(v[0], w.clone()).unwrap())
}

pub fn random_targets(rng: &mut ChaCha8Rng, frames: usize, bins: usize, speakers: usize) -> TargetField {
    let mut values = vec![0.0; frames * bins * speakers];
    for r in 0..frames * bins {
        values[r * speakers + rng.random_range(0..speakers)] = 1.0;
    }
    TargetField { frames, bins, speakers, values }
}

pub fn random_embeddings(rng: &mut ChaCha8Rng, frames: usize, bins: usize, dim: usize) -> EmbeddingField {
    let values = (0..frames * bins * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    EmbeddingField { frames, bins, dim, values }
}

pub fn case_dc_loss(rng: &mut ChaCha8Rng) -> f64 {
    let (t, f, d, s) = (dims(rng, 1, 5), dims(rng, 1, 5), dims(rng, 1, 6), dims(rng, 2, 3));
    let mut v = random_embeddings(rng, t, f, d);
    let u = random_targets(rng, t, f, s);
    let (_, grad) = dc_loss(&v, &u).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..v.values.len() {
        let orig = v.values[j];
        v.values[j] = orig + FD_STEP;
        let plus = dc_loss(&v, &u).unwrap().0;
        v.values[j] = orig - FD_STEP;
        let minus = dc_loss(&v, &u).unwrap().0;
        v.values[j] = orig;
        worst = worst.max(rel_err(grad[j], (plus - minus) / (2.0 * FD_STEP)));
    }
    worst
}

/// A random tiny architecture exercising every branch option.
pub fn tiny_hyperparams(rng: &mut ChaCha8Rng) -> HyperParams {
    let enc = rng.random_range(0..=2);
    let lstm = if enc == 0 { rng.random_range(1..=2) } else { rng.random_range(0..=2) };
    HyperParams {
        num_enc_layers: enc,
        first_enc_channels: rng.random_range(1..=3),
        channel_factor: rng.random_range(0.5..2.0),
        last_dec_channels: rng.random_range(1..=3),
        kernel_t: rng.random_range(1..=3),
        kernel_t_decay: rng.random_range(0.83..3.33),
        kernel_f: rng.random_range(1..=3),
        kernel_f_decay: rng.random_range(0.83..3.33),
        pool_period_t: rng.random_range(1..=2),
        pool_period_f: rng.random_range(1..=2),
        upsampling: Upsampling::ALL[rng.random_range(0..3)],
        lstm_layers: lstm,
        lstm_first_cells: rng.random_range(1..=3),
        lstm_cell_factor: rng.random_range(0.5..2.0),
        lstm_direction: Direction::ALL[rng.random_range(0..2)],
        concat: Concat::ALL[rng.random_range(0..2)],
        fc_layers: rng.random_range(0..=2),
        fc_first_units: rng.random_range(1..=4),
        fc_unit_factor: rng.random_range(0.3..2.0),
    }
    .canonical()
}

/// Parameter gradients of a whole tiny network under the deep-clustering
/// loss, on a random subset of at most 40 weights.
pub fn case_model(rng: &mut ChaCha8Rng) -> f64 {
    let hp = tiny_hyperparams(rng);
    let (t, f, d) = (rng.random_range(2..=5), rng.random_range(2..=5), rng.random_range(2..=4));
    let spec = resolve(&hp, f, d, 2).unwrap();
    let mut model = build(&spec, rng.random());
    // generic weights: zero biases put pre-activations exactly on ReLU kinks
    for p in 0..model.params.len() {
        for w in model.params.get_mut(p).data_mut() {
            *w = rng.random_range(-0.8..0.8);
        }
    }
    let x = FeatureSeq {
        frames: t,
        bins: f,
        values: (0..t * f).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let u = random_targets(rng, t, f, 2);
    let loss_and_grad = |m: &dcsep::model::Model| {
        let mut g = Graph::new();
        let out = m.forward(&mut g, &x).unwrap();
        let v = EmbeddingField::from_tensor(g.value(out)).unwrap();
        let (loss, grad) = dc_loss(&v, &u).unwrap();
        let seed = Tensor::new(g.value(out).shape().to_vec(), grad).unwrap();
        (loss, g.backward(out, seed).unwrap().param_grads(&m.params))
    };
    let (_, analytic) = loss_and_grad(&model);
    let mut slots: Vec<(usize, usize)> = (0..model.params.len())
        .flat_map(|p| (0..model.params.get(p).len()).map(move |j| (p, j)))
        .collect();
    while slots.len() > 40 {
        slots.swap_remove(rng.random_range(0..slots.len()));
    }
    let mut worst: f64 = 0.0;
    for (p, j) in slots {
        let orig = model.params.get(p).data()[j];
        model.params.get_mut(p).data_mut()[j] = orig + FD_STEP;
        let plus = loss_and_grad(&model).0;
        model.params.get_mut(p).data_mut()[j] = orig - FD_STEP;
        let minus = loss_and_grad(&model).0;
        model.params.get_mut(p).data_mut()[j] = orig;
        worst = worst.max(rel_err(analytic[p].data()[j], (plus - minus) / (2.0 * FD_STEP)));
    }
    worst
}

pub type GradCase = fn(&mut ChaCha8Rng) -> f64;

pub const GRADIENT_CASES: &[(&str, GradCase)] = &[
    ("conv2d", case_conv2d),
    ("relu", case_relu),
    ("maxpool", case_maxpool),
    ("unpool", case_unpool),
    ("upsample_nearest", case_upsample),
    ("concat_last", case_concat_last),
    ("concat_broadcast", case_concat_broadcast),
    ("concat_flatten", case_concat_flatten),
    ("linear", case_linear),
    ("lstm", case_lstm),
    ("lstm_bidirectional", case_lstm_bidirectional),
    ("reshape", case_reshape),
    ("unit_normalize", case_unit_normalize),
    ("dot_const", case_dot_const),
    ("dc_loss", case_dc_loss),
    ("model", case_model),
];

/// Worst error over `shapes` random draws of one case.
pub fn run_case(case: GradCase, shapes: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..shapes).map(|_| case(&mut rng)).fold(0.0, f64::max)
}

/// Weight and bias tally re-derived from the raw hyperparameters, one layer
/// at a time, without going through `resolve`.
pub struct Tally {
    pub cnn: u64,
    pub lstm: u64,
    pub fc: u64,
}

fn geometric(first: usize, factor: f64, l: usize) -> u64 {
    let mut v = first as f64;
    for _ in 1..l {
        v *= factor;
    }
    (v.round() as u64).max(1)
}

fn kernel(k0: usize, decay: f64, pools: u32) -> u64 {
    let mut v = k0 as f64;
    for _ in 0..pools {
        v /= decay;
    }
    (v.round() as u64).max(1)
}

pub fn param_oracle(hp: &HyperParams, bins: usize, dim: usize) -> Tally {
    let mut cnn = 0u64;
    let n = hp.num_enc_layers;
    let mut chans = Vec::new();
    let mut kernels = Vec::new();
    let (mut pt, mut pf) = (0u32, 0u32);
    let mut cin = 1u64;
    for l in 1..=n {
        let c = geometric(hp.first_enc_channels, hp.channel_factor, l);
        let (kt, kf) = (kernel(hp.kernel_t, hp.kernel_t_decay, pt), kernel(hp.kernel_f, hp.kernel_f_decay, pf));
        // one weight per (kt, kf, in, out) plus one bias per output channel
        cnn += kt * kf * cin * c + c;
        chans.push(c);
        kernels.push((kt, kf));
        pt += (l % hp.pool_period_t == 0) as u32;
        pf += (l % hp.pool_period_f == 0) as u32;
        cin = c;
    }
    for l in (0..n).rev() {
        let skip = if hp.upsampling == Upsampling::Bypass { chans[l] } else { 0 };
        let cin = chans[l] + skip;
        let cout = if l == 0 { hp.last_dec_channels as u64 } else { chans[l - 1] };
        let (kt, kf) = kernels[l];
        cnn += kt * kf * cin * cout + cout;
    }

    let dirs = if hp.lstm_direction == Direction::Bi { 2 } else { 1 };
    let mut lstm = 0u64;
    let mut input = bins as u64;
    let mut width = 0u64;
    for l in 1..=hp.lstm_layers {
        let cells = geometric(hp.lstm_first_cells, hp.lstm_cell_factor, l);
        // four gates: input weights, recurrent weights, bias
        lstm += dirs * 4 * (input * cells + cells * cells + cells);
        input = dirs * cells;
        width = input;
    }

    let c = if n > 0 { hp.last_dec_channels as u64 } else { 0 };
    let flattening = match (n > 0, hp.lstm_layers > 0) {
        (true, true) => hp.concat == Concat::Flattening,
        (true, false) => false,
        _ => true,
    };
    let (mut prev, out) = if flattening {
        (bins as u64 * c + width, bins as u64 * dim as u64)
    } else {
        (c + width, dim as u64)
    };
    let mut fc = 0u64;
    for l in 1..=hp.fc_layers {
        let u = geometric(hp.fc_first_units, hp.fc_unit_factor, l);
        fc += prev * u + u;
        prev = u;
    }
    fc += prev * out + out;
    Tally { cnn, lstm, fc }
}

impl Tally {
    pub fn total(&self) -> u64 {
        self.cnn + self.lstm + self.fc
    }
}

pub fn matern(a: &[f64], b: &[f64], ls: &[f64], sf2: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| (x - y) * (x - y) / (l * l)).sum();
    let s = (5.0 * r2).sqrt();
    sf2 * (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let m = a[r][c];
                for j in 0..n {
                    a[r][j] -= m * a[c][j];
                    inv[r][j] -= m * inv[c][j];
                }
            }
        }
    }
    inv
}

pub fn dense_posterior(gp: &GpState, x: &[f64]) -> (f64, f64) {
    let p = gp.params();
    let xs = gp.inputs();
    let n = xs.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let diag = if i == j { p.noise_var + gp.jitter() } else { 0.0 };
                    matern(&xs[i], &xs[j], &p.length_scales, p.signal_var) + diag
                })
                .collect()
        })
        .collect();
    let kinv = invert(k);
    let ks: Vec<f64> = xs.iter().map(|xi| matern(x, xi, &p.length_scales, p.signal_var)).collect();
    let resid: Vec<f64> = gp.targets().iter().map(|y| y - p.mean).collect();
    let mut mean = p.mean;
    let mut var = p.signal_var;
    for i in 0..n {
        for j in 0..n {
            mean += ks[i] * kinv[i][j] * resid[j];
            var -= ks[i] * kinv[i][j] * ks[j];
        }
    }
    (mean, var)
}

/// Stratified Monte Carlo estimate of (EI, PI) for f ~ N(mu, sigma²).
pub fn monte_carlo(mu: f64, sigma: f64, target: f64, draws: usize, r: &mut ChaCha8Rng) -> (f64, f64) {
    let normal = Normal::new(mu, sigma).unwrap();
    let (mut ei, mut pi) = (0.0, 0.0);
    for i in 0..draws {
        let u = (i as f64 + r.random::<f64>()) / draws as f64;
        let f = normal.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
        let imp = target - f;
        if imp > 0.0 {
            ei += imp;
            pi += 1.0;
        }
    }
    (ei / draws as f64, pi / draws as f64)
}
