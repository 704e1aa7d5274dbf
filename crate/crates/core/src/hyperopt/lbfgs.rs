//! Box-constrained limited-memory BFGS (projected two-loop recursion with
//! Armijo backtracking), written for maximization.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step improves the objective by less than this
    /// (relative).
    pub f_tol: f64,
    pub armijo_c: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 200,
            grad_tol: 1e-10,
            f_tol: 1e-14,
            armijo_c: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after the start and after every accepted step.
    pub trace: Vec<f64>,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coordinates pinned at a bound by a gradient pointing outward
/// (`g` is the gradient of the minimized function).
fn pinned(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
        .collect()
}

/// Maximizes `f` (returning value and gradient) over the box `[lo, hi]`.
pub fn maximize<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    // Internally minimize h = -f.
    let mut eval = |x: &[f64]| {
        let (v, g) = f(x);
        (-v, g.into_iter().map(|gi| -gi).collect::<Vec<_>>())
    };
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut h, mut g) = eval(&x);
    let mut trace = vec![-h];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if !h.is_finite() {
            break;
        }
        let pin = pinned(&x, &g, lo, hi);
        let pg: Vec<f64> = (0..n).map(|i| if pin[i] { 0.0 } else { g[i] }).collect();
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.grad_tol {
            break;
        }

        // Two-loop recursion on the free coordinates.
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().zip(&pin).map(|(v, &p)| if p { 0.0 } else { -v }).collect();
        if dot(&d, &pg) >= 0.0 {
            d = pg.iter().map(|v| -v).collect();
            mem.clear();
        }

        // Projected backtracking line search.
        let mut step = if mem.is_empty() {
            // first step: cap the move at 10% of the box
            let dn = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let span = lo.iter().zip(hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
            if dn > 0.0 && span.is_finite() { (0.1 * span / dn).min(1.0) } else { 1.0 }
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..50 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut xn, lo, hi);
            let moved: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if decrease < 0.0 {
                let (hn, gn) = eval(&xn);
                if hn.is_finite() && hn <= h + opts.armijo_c * decrease {
                    accepted = Some((xn, hn, gn, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, hn, gn, s)) = accepted else {
            if mem.is_empty() {
                break;
            }
            // retry once from steepest descent
            mem.clear();
            continue;
        };
        iterations += 1;
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let improvement = h - hn;
        x = xn;
        h = hn;
        g = gn;
        trace.push(-h);
        if improvement <= opts.f_tol * h.abs().max(1.0) {
            break;
        }
    }
    LbfgsResult {
        x,
        value: -h,
        iterations,
        trace,
    }
}
