//! Gaussian-process regression with a Matérn-5/2 ARD kernel and a
//! constant prior mean.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::lbfgs::{maximize, LbfgsOptions};
use super::HpoError;

const SQRT5: f64 = 2.236_067_977_499_79;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

// Bounds of the fitted hyperparameters, for standardized targets on the unit cube.
const LS_BOUNDS: (f64, f64) = (1e-2, 20.0);
const SIGNAL_BOUNDS: (f64, f64) = (1e-6, 100.0);
const NOISE_BOUNDS: (f64, f64) = (1e-10, 1.0);

/// Kernel hyperparameters in the units of the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub length_scales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
    pub mean: f64,
}

/// Matérn-5/2 covariance between two points.
pub fn matern52(a: &[f64], b: &[f64], length_scales: &[f64], signal_var: f64) -> f64 {
    let r = scaled_dist(a, b, length_scales);
    signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
}

fn scaled_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `sf2 · 5/3 · (1 + √5 r) · exp(−√5 r)`, the factor shared by all
/// derivatives of the kernel with respect to coordinates and length scales.
fn deriv_factor(r: f64, signal_var: f64) -> f64 {
    signal_var * 5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
}

fn covariance(x: &[Vec<f64>], ls: &[f64], sf2: f64) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| matern52(&x[i], &x[j], ls, sf2))
}

/// Cholesky of `k + (noise + jitter)·I`, escalating the jitter on failure.
fn factor(k: &DMatrix<f64>, noise: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += noise + jitter;
        }
        if let Some(c) = m.cholesky() {
            return Some((c, jitter));
        }
        jitter *= 10.0;
    }
    None
}

/// Fitted surrogate: data, kernel and cached factorization.
#[derive(Debug, Clone)]
pub struct GpState {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    params: KernelParams,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    /// Log marginal likelihood of the standardized targets after every
    /// accepted ascent step of the winning restart (empty for fixed kernels).
    pub fit_trace: Vec<f64>,
}

impl GpState {
    /// Conditions a GP with fixed kernel hyperparameters on `(x, y)`.
    pub fn with_params(x: &[Vec<f64>], y: &[f64], params: KernelParams) -> Result<Self, HpoError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(HpoError::Config(format!("{} inputs for {} observations", x.len(), y.len())));
        }
        let d = x[0].len();
        if x.iter().any(|p| p.len() != d) || params.length_scales.len() != d {
            return Err(HpoError::Config("inconsistent input dimension".into()));
        }
        let k = covariance(x, &params.length_scales, params.signal_var);
        let (chol, jitter) = factor(&k, params.noise_var)
            .ok_or_else(|| HpoError::Numerical("covariance is not positive definite".into()))?;
        let resid = DVector::from_iterator(y.len(), y.iter().map(|v| v - params.mean));
        let alpha = chol.solve(&resid);
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            params,
            jitter,
            chol,
            alpha,
            fit_trace: Vec::new(),
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Diagonal jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.params.length_scales.len()
    }

    fn kstar(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .map(|xi| matern52(x, xi, &self.params.length_scales, self.params.signal_var)),
        )
    }

    /// Posterior mean and standard deviation of the latent function.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = self.kstar(x);
        let mean = self.params.mean + k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).expect("non-singular factor");
        let var = (self.params.signal_var - v.dot(&v)).max(0.0);
        (mean, var.sqrt())
    }

    /// Mean, standard deviation and their gradients with respect to `x`.
    pub fn predict_with_grad(&self, x: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let d = x.len();
        let ls = &self.params.length_scales;
        let k = self.kstar(x);
        let mean = self.params.mean + k.dot(&self.alpha);
        let beta = self.chol.solve(&k);
        let var = (self.params.signal_var - k.dot(&beta)).max(0.0);
        let std = var.sqrt();
        let mut dmean = vec![0.0; d];
        let mut dvar = vec![0.0; d];
        for (i, xi) in self.x.iter().enumerate() {
            let c = deriv_factor(scaled_dist(x, xi, ls), self.params.signal_var);
            for j in 0..d {
                let dk = -c * (x[j] - xi[j]) / (ls[j] * ls[j]);
                dmean[j] += self.alpha[i] * dk;
                dvar[j] -= 2.0 * beta[i] * dk;
            }
        }
        let dstd = if std > 1e-12 { dvar.iter().map(|v| v / (2.0 * std)).collect() } else { vec![0.0; d] };
        (mean, std, dmean, dstd)
    }

    /// Log marginal likelihood of the observations under the current kernel.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let resid = DVector::from_iterator(self.y.len(), self.y.iter().map(|v| v - self.params.mean));
        let logdet: f64 = self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        -0.5 * resid.dot(&self.alpha) - logdet - 0.5 * self.y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Log marginal likelihood and its gradient with respect to
/// `θ = (ln ℓ_1..ln ℓ_d, ln σ_f², ln σ_n²)` for zero-mean targets.
fn lml_and_grad(x: &[Vec<f64>], y: &DVector<f64>, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = x.len();
    let d = theta.len() - 2;
    let ls: Vec<f64> = theta[..d].iter().map(|v| v.exp()).collect();
    let sf2 = theta[d].exp();
    let sn2 = theta[d + 1].exp();
    let k = covariance(x, &ls, sf2);
    let (chol, _) = factor(&k, sn2)?;
    let alpha = chol.solve(y);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * y.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    // W = ααᵀ − K⁻¹; ∂L/∂θ = ½ Σ W ∘ ∂K/∂θ
    let kinv = chol.inverse();
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            if i != j {
                let c = deriv_factor(scaled_dist(&x[i], &x[j], &ls), sf2);
                for m in 0..d {
                    let diff = x[i][m] - x[j][m];
                    grad[m] += 0.5 * w * c * diff * diff / (ls[m] * ls[m]);
                }
            }
            grad[d] += 0.5 * w * k[(i, j)];
            if i == j {
                grad[d + 1] += 0.5 * w * sn2;
            }
        }
    }
    Some((lml, grad))
}

/// Fits the kernel hyperparameters by maximizing the log marginal
/// likelihood from `restarts` starting points (the first at a fixed
/// default, the rest uniform in the log-bounds).
///
/// Targets are standardized for the optimization; the returned state holds
/// the equivalent parameters in the original units.
pub fn gp_fit<R: Rng>(x: &[Vec<f64>], y: &[f64], restarts: usize, rng: &mut R) -> Result<GpState, HpoError> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(HpoError::Config(format!("need at least two observations, got {n}")));
    }
    let d = x[0].len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if sd > 1e-12 { sd } else { 1.0 };
    let ys = DVector::from_iterator(n, y.iter().map(|v| (v - mean) / scale));

    let mut lo = vec![LS_BOUNDS.0.ln(); d];
    let mut hi = vec![LS_BOUNDS.1.ln(); d];
    lo.extend([SIGNAL_BOUNDS.0.ln(), NOISE_BOUNDS.0.ln()]);
    hi.extend([SIGNAL_BOUNDS.1.ln(), NOISE_BOUNDS.1.ln()]);
    let mut start = vec![0.3f64.ln(); d];
    start.extend([0.0, 1e-4f64.ln()]);

    let opts = LbfgsOptions {
        max_iter: 100,
        f_tol: 1e-10,
        ..LbfgsOptions::default()
    };
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for r in 0..restarts.max(1) {
        let x0: Vec<f64> = if r == 0 {
            start.clone()
        } else {
            lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..=*h)).collect()
        };
        if lml_and_grad(x, &ys, &x0).is_none() {
            continue;
        }
        let res = maximize(
            |t| lml_and_grad(x, &ys, t).unwrap_or((f64::NEG_INFINITY, vec![0.0; t.len()])),
            &x0,
            &lo,
            &hi,
            &opts,
        );
        if res.value.is_finite() && best.as_ref().is_none_or(|b| res.value > b.0) {
            best = Some((res.value, res.x, res.trace));
        }
    }
    let (_, theta, trace) = best.ok_or_else(|| HpoError::Numerical("no restart produced a factorizable kernel".into()))?;
    let params = KernelParams {
        length_scales: theta[..d].iter().map(|v| v.exp()).collect(),
        signal_var: theta[d].exp() * scale * scale,
        noise_var: theta[d + 1].exp() * scale * scale,
        mean,
    };
    let mut state = GpState::with_params(x, y, params)?;
    state.fit_trace = trace;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = points(7, 3, &mut rng);
        let y = DVector::from_iterator(7, (0..7).map(|_| rng.random_range(-1.0..1.0)));
        let theta = [-0.5, 0.2, -1.0, 0.3, -3.0];
        let (_, g) = lml_and_grad(&x, &y, &theta).unwrap();
        for k in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta;
            tp[k] += h;
            let mut tm = theta;
            tm[k] -= h;
            let fd = (lml_and_grad(&x, &y, &tp).unwrap().0 - lml_and_grad(&x, &y, &tm).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(1.0), "θ{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn constant_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = points(6, 2, &mut rng);
        let gp = gp_fit(&x, &[0.3; 6], 4, &mut rng).unwrap();
        let (m, _) = gp.predict(&[0.5, 0.5]);
        assert!((m - 0.3).abs() < 1e-6);
        assert!(gp.params().signal_var < 1e-3);
    }

    #[test]
    fn duplicated_inputs_with_conflicting_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = vec![vec![0.2, 0.2], vec![0.2, 0.2], vec![0.8, 0.1]];
        let gp = gp_fit(&x, &[1.0, 2.0, 0.0], 8, &mut rng).unwrap();
        assert!(gp.predict(&[0.2, 0.2]).0.is_finite());
    }

    #[test]
    fn prior_reversion_far_from_data() {
        let params = KernelParams {
            length_scales: vec![0.1],
            signal_var: 2.0,
            noise_var: 1e-6,
            mean: 0.7,
        };
        let gp = GpState::with_params(&[vec![0.0], vec![0.1]], &[1.0, -1.0], params).unwrap();
        let (m, s) = gp.predict(&[50.0]);
        assert!((m - 0.7).abs() < 1e-12 && (s - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fit_trace_is_non_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = points(12, 2, &mut rng);
        let y: Vec<f64> = x.iter().map(|p| (6.0 * p[0]).sin() + p[1]).collect();
        let gp = gp_fit(&x, &y, 8, &mut rng).unwrap();
        assert!(gp.fit_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(gp.fit_trace.len() > 1);
    }
}
