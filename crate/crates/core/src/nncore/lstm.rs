//! LSTM recurrence and its backpropagation through time.

use super::gemm::gemm;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations saved by the forward pass, indexed by processing step.
pub(crate) struct LstmCache {
    /// Activated gates `[i, f, g, o]` per step, T×4N.
    gates: Vec<f64>,
    /// Cell state per step, T×N.
    cells: Vec<f64>,
    reverse: bool,
}

pub(crate) struct LstmGrads {
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub b: Vec<f64>,
    pub x: Option<Vec<f64>>,
}

/// Frame index processed at step `s`.
fn frame(s: usize, t: usize, reverse: bool) -> usize {
    if reverse {
        t - 1 - s
    } else {
        s
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_forward(
    x: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    b: &[f64],
    t: usize,
    din: usize,
    n: usize,
    reverse: bool,
) -> (Vec<f64>, LstmCache) {
    let g4 = 4 * n;
    // Input projections for all frames at once.
    let mut proj = vec![0.0; t * g4];
    gemm(t, din, g4, x, false, w_ih, false, 0.0, &mut proj);

    let mut out = vec![0.0; t * n];
    let mut gates = vec![0.0; t * g4];
    let mut cells = vec![0.0; t * n];
    let mut h_prev = vec![0.0; n];
    let mut c_prev = vec![0.0; n];
    let mut z = vec![0.0; g4];
    for s in 0..t {
        let ft = frame(s, t, reverse);
        z.copy_from_slice(&proj[ft * g4..(ft + 1) * g4]);
        for (zi, bi) in z.iter_mut().zip(b) {
            *zi += bi;
        }
        gemm(1, n, g4, &h_prev, false, w_hh, false, 1.0, &mut z);
        let gs = &mut gates[s * g4..(s + 1) * g4];
        let cs = &mut cells[s * n..(s + 1) * n];
        for j in 0..n {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[n + j]);
            let g = z[2 * n + j].tanh();
            let o = sigmoid(z[3 * n + j]);
            let c = f * c_prev[j] + i * g;
            let h = o * c.tanh();
            gs[j] = i;
            gs[n + j] = f;
            gs[2 * n + j] = g;
            gs[3 * n + j] = o;
            cs[j] = c;
            out[ft * n + j] = h;
        }
        c_prev.copy_from_slice(cs);
        h_prev.copy_from_slice(&out[ft * n..(ft + 1) * n]);
    }
    (out, LstmCache { gates, cells, reverse })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward(
    dout: &[f64],
    x: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    out: &[f64],
    cache: &LstmCache,
    t: usize,
    din: usize,
    n: usize,
    need_dx: bool,
) -> LstmGrads {
    let g4 = 4 * n;
    let reverse = cache.reverse;
    // dz per frame (not per step) so the input-side products are plain gemms.
    let mut dz = vec![0.0; t * g4];
    // Hidden state fed into each frame's recurrence, per frame.
    let mut h_in = vec![0.0; t * n];
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    for s in (0..t).rev() {
        let ft = frame(s, t, reverse);
        let gs = &cache.gates[s * g4..(s + 1) * g4];
        let cs = &cache.cells[s * n..(s + 1) * n];
        let zrow = &mut dz[ft * g4..(ft + 1) * g4];
        for j in 0..n {
            let (i, f, g, o) = (gs[j], gs[n + j], gs[2 * n + j], gs[3 * n + j]);
            let c_prev = if s > 0 { cache.cells[(s - 1) * n + j] } else { 0.0 };
            let tc = cs[j].tanh();
            let dh = dout[ft * n + j] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            zrow[j] = dc * g * i * (1.0 - i);
            zrow[n + j] = dc * c_prev * f * (1.0 - f);
            zrow[2 * n + j] = dc * i * (1.0 - g * g);
            zrow[3 * n + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        gemm(1, g4, n, zrow, false, w_hh, true, 0.0, &mut dh_next);
        if s > 0 {
            let prev = frame(s - 1, t, reverse);
            h_in[ft * n..(ft + 1) * n].copy_from_slice(&out[prev * n..(prev + 1) * n]);
        }
    }
    let mut dw_ih = vec![0.0; din * g4];
    gemm(din, t, g4, x, true, &dz, false, 0.0, &mut dw_ih);
    let mut dw_hh = vec![0.0; n * g4];
    gemm(n, t, g4, &h_in, true, &dz, false, 0.0, &mut dw_hh);
    let mut db = vec![0.0; g4];
    for row in dz.chunks(g4) {
        for (a, b) in db.iter_mut().zip(row) {
            *a += b;
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = vec![0.0; t * din];
        gemm(t, g4, din, &dz, false, w_ih, true, 0.0, &mut dx);
        dx
    });
    LstmGrads {
        w_ih: dw_ih,
        w_hh: dw_hh,
        b: db,
        x: dx,
    }
}
