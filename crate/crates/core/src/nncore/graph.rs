use super::gemm::gemm;
use super::lstm::{lstm_backward, lstm_forward, LstmCache};
use super::{shape_err, NnError, ParamStore, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Argmax positions recorded by a max-pool, used to reverse it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    /// Shape of the tensor before pooling, `[T, F, C]`.
    pub in_shape: [usize; 3],
    /// Shape of the pooled tensor.
    pub out_shape: [usize; 3],
    pub pool: (usize, usize),
    /// Linear index into the pre-pool tensor for every pooled cell.
    pub argmax: Vec<usize>,
}

enum Op {
    Leaf,
    Conv2d { x: Var, k: Var, b: Var },
    Relu(Var),
    MaxPool { x: Var, idx: PoolIndices },
    Unpool { x: Var, idx: PoolIndices },
    Upsample { x: Var, rep: (usize, usize) },
    ConcatLast { a: Var, b: Var },
    ConcatBroadcast { cnn: Var, lstm: Var },
    ConcatFlatten { cnn: Var, lstm: Var },
    Linear { x: Var, w: Var, b: Var },
    Lstm { x: Var, w_ih: Var, w_hh: Var, b: Var, cache: LstmCache },
    Reshape(Var),
    UnitNormalize { x: Var, norms: Vec<f64> },
    DotConst { x: Var, weights: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    param: Option<usize>,
}

/// Weights of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
}

/// Tape of one forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Norm guard for [`Graph::unit_normalize`].
pub const NORM_FLOOR: f64 = 1e-12;

/// Rows per im2col block; bounds the scratch buffer for wide kernels.
const IM2COL_BLOCK_VALUES: usize = 1 << 22;

fn dims3(t: &Tensor, what: &str) -> Result<[usize; 3], NnError> {
    match t.shape() {
        &[a, b, c] => Ok([a, b, c]),
        s => shape_err(format!("{what} must be rank 3, got {s:?}")),
    }
}

fn dims2(t: &Tensor, what: &str) -> Result<[usize; 2], NnError> {
    match t.shape() {
        &[a, b] => Ok([a, b]),
        s => shape_err(format!("{what} must be rank 2, got {s:?}")),
    }
}

struct ConvGeom {
    t: usize,
    f: usize,
    cin: usize,
    cout: usize,
    kt: usize,
    kf: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.kt * self.kf * self.cin
    }

    fn pads(&self) -> (isize, isize) {
        (((self.kt - 1) / 2) as isize, ((self.kf - 1) / 2) as isize)
    }

    fn block_rows(&self) -> usize {
        (IM2COL_BLOCK_VALUES / self.patch().max(1)).clamp(1, (self.t * self.f).max(1))
    }

    /// Patches for output positions `rows` (flattened t·F + f).
    fn im2col(&self, x: &[f64], rows: std::ops::Range<usize>, cols: &mut [f64]) {
        let (pt, pf) = self.pads();
        let p = self.patch();
        for (r, row) in rows.enumerate() {
            let (t, f) = ((row / self.f) as isize, (row % self.f) as isize);
            let dst = &mut cols[r * p..(r + 1) * p];
            let mut o = 0;
            for dt in 0..self.kt as isize {
                let ti = t + dt - pt;
                for df in 0..self.kf as isize {
                    let fi = f + df - pf;
                    let seg = &mut dst[o..o + self.cin];
                    if ti >= 0 && fi >= 0 && (ti as usize) < self.t && (fi as usize) < self.f {
                        let base = (ti as usize * self.f + fi as usize) * self.cin;
                        seg.copy_from_slice(&x[base..base + self.cin]);
                    } else {
                        seg.fill(0.0);
                    }
                    o += self.cin;
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], rows: std::ops::Range<usize>, dx: &mut [f64]) {
        let (pt, pf) = self.pads();
        let p = self.patch();
        for (r, row) in rows.enumerate() {
            let (t, f) = ((row / self.f) as isize, (row % self.f) as isize);
            let src = &cols[r * p..(r + 1) * p];
            let mut o = 0;
            for dt in 0..self.kt as isize {
                let ti = t + dt - pt;
                for df in 0..self.kf as isize {
                    let fi = f + df - pf;
                    if ti >= 0 && fi >= 0 && (ti as usize) < self.t && (fi as usize) < self.f {
                        let base = (ti as usize * self.f + fi as usize) * self.cin;
                        for (d, s) in dx[base..base + self.cin].iter_mut().zip(&src[o..o + self.cin]) {
                            *d += s;
                        }
                    }
                    o += self.cin;
                }
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|&p| self.needs(p));
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor, needs_grad: bool, param: Option<usize>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that receives a gradient.
    pub fn var(&mut self, value: Tensor) -> Var {
        self.leaf(value, true, None)
    }

    /// Input excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false, None)
    }

    /// Trainable tensor `id` of `store`.
    pub fn param(&mut self, store: &ParamStore, id: usize) -> Var {
        self.leaf(store.get(id).clone(), true, Some(id))
    }

    /// Stride-1 cross-correlation with zero "same" padding.
    /// `x` is T×F×Cin, `k` is w_t×w_f×Cin×Cout, `b` is Cout.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var, NnError> {
        let [t, f, cin] = dims3(self.value(x), "conv input")?;
        let [kt, kf, kc, cout] = match self.value(k).shape() {
            &[a, b, c, d] => [a, b, c, d],
            s => return shape_err(format!("conv kernel must be rank 4, got {s:?}")),
        };
        if kc != cin {
            return shape_err(format!("conv kernel expects {kc} input channels, got {cin}"));
        }
        if kt == 0 || kf == 0 {
            return shape_err("conv kernel extents must be positive");
        }
        if self.value(b).shape() != [cout] {
            return shape_err(format!("conv bias must have shape [{cout}]"));
        }
        let geom = ConvGeom { t, f, cin, cout, kt, kf };
        let rows = t * f;
        let mut out = vec![0.0; rows * cout];
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        let p = geom.patch();
        let block = geom.block_rows();
        let mut cols = vec![0.0; block * p];
        let mut start = 0;
        while start < rows {
            let end = (start + block).min(rows);
            let n = end - start;
            geom.im2col(xv, start..end, &mut cols[..n * p]);
            gemm(n, p, cout, &cols[..n * p], false, kv, false, 0.0, &mut out[start * cout..end * cout]);
            start = end;
        }
        let bias = self.value(b).data();
        for row in out.chunks_mut(cout.max(1)) {
            for (o, bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let value = Tensor::new(vec![t, f, cout], out)?;
        Ok(self.push(value, Op::Conv2d { x, k, b }, &[x, k, b]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor::new(
            src.shape().to_vec(),
            src.data().iter().map(|v| v.max(0.0)).collect(),
        )
        .expect("same shape");
        self.push(value, Op::Relu(x), &[x])
    }

    /// Max-pool of a T×F×C tensor with window (and stride) `pool_t`×`pool_f`.
    /// Partial windows at the end are kept; ties go to the lowest linear index.
    pub fn maxpool(&mut self, x: Var, pool_t: usize, pool_f: usize) -> Result<(Var, PoolIndices), NnError> {
        if pool_t == 0 || pool_f == 0 {
            return shape_err("pool extents must be positive");
        }
        let [t, f, c] = dims3(self.value(x), "maxpool input")?;
        let (to, fo) = (t.div_ceil(pool_t), f.div_ceil(pool_f));
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(to * fo * c);
        let mut argmax = Vec::with_capacity(to * fo * c);
        for ot in 0..to {
            for of in 0..fo {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for it in ot * pool_t..((ot + 1) * pool_t).min(t) {
                        for jf in of * pool_f..((of + 1) * pool_f).min(f) {
                            let i = (it * f + jf) * c + ch;
                            if xv[i] > best || best_i == usize::MAX {
                                best = xv[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
        let idx = PoolIndices {
            in_shape: [t, f, c],
            out_shape: [to, fo, c],
            pool: (pool_t, pool_f),
            argmax,
        };
        let value = Tensor::new(vec![to, fo, c], out)?;
        let v = self.push(value, Op::MaxPool { x, idx: idx.clone() }, &[x]);
        Ok((v, idx))
    }

    /// Places pooled values back at their recorded positions, zeros elsewhere.
    pub fn unpool(&mut self, x: Var, idx: &PoolIndices) -> Result<Var, NnError> {
        if self.value(x).shape() != idx.out_shape {
            return shape_err(format!(
                "unpool input {:?} does not match recorded pooled shape {:?}",
                self.value(x).shape(),
                idx.out_shape
            ));
        }
        let mut out = Tensor::zeros(&idx.in_shape);
        let xv = self.value(x).data();
        for (i, &pos) in idx.argmax.iter().enumerate() {
            out.data_mut()[pos] = xv[i];
        }
        Ok(self.push(out, Op::Unpool { x, idx: idx.clone() }, &[x]))
    }

    /// Nearest-neighbour upsampling by `rep_t`×`rep_f`, cropped to `out_t`×`out_f`.
    pub fn upsample_nearest(
        &mut self,
        x: Var,
        rep_t: usize,
        rep_f: usize,
        out_t: usize,
        out_f: usize,
    ) -> Result<Var, NnError> {
        let [t, f, c] = dims3(self.value(x), "upsample input")?;
        if rep_t == 0 || rep_f == 0 || out_t.div_ceil(rep_t) != t || out_f.div_ceil(rep_f) != f {
            return shape_err(format!(
                "cannot upsample {t}×{f} by {rep_t}×{rep_f} to {out_t}×{out_f}"
            ));
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(out_t * out_f * c);
        for ot in 0..out_t {
            for of in 0..out_f {
                let base = ((ot / rep_t) * f + of / rep_f) * c;
                out.extend_from_slice(&xv[base..base + c]);
            }
        }
        let value = Tensor::new(vec![out_t, out_f, c], out)?;
        Ok(self.push(value, Op::Upsample { x, rep: (rep_t, rep_f) }, &[x]))
    }

    /// Concatenation along the trailing axis; leading axes must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != sb.len() || sa.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return shape_err(format!("cannot concatenate {sa:?} and {sb:?}"));
        }
        let (ca, cb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let rows: usize = sa[..sa.len() - 1].iter().product();
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(&av[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::ConcatLast { a, b }, &[a, b]))
    }

    /// T×F×C and T×N into T×F×(C+N), copying each LSTM frame across frequency.
    pub fn concat_broadcast(&mut self, cnn: Var, lstm: Var) -> Result<Var, NnError> {
        let [t, f, c] = dims3(self.value(cnn), "cnn output")?;
        let [tl, n] = dims2(self.value(lstm), "lstm output")?;
        if t != tl {
            return shape_err(format!("frame count mismatch: cnn {t}, lstm {tl}"));
        }
        let (cv, lv) = (self.value(cnn).data(), self.value(lstm).data());
        let mut out = Vec::with_capacity(t * f * (c + n));
        for ti in 0..t {
            let lrow = &lv[ti * n..(ti + 1) * n];
            for fi in 0..f {
                let base = (ti * f + fi) * c;
                out.extend_from_slice(&cv[base..base + c]);
                out.extend_from_slice(lrow);
            }
        }
        let value = Tensor::new(vec![t, f, c + n], out)?;
        Ok(self.push(value, Op::ConcatBroadcast { cnn, lstm }, &[cnn, lstm]))
    }

    /// T×F×C and T×N into T×(F·C+N): per frame the row-major F×C block,
    /// then the LSTM row.
    pub fn concat_flatten(&mut self, cnn: Var, lstm: Var) -> Result<Var, NnError> {
        let [t, f, c] = dims3(self.value(cnn), "cnn output")?;
        let [tl, n] = dims2(self.value(lstm), "lstm output")?;
        if t != tl {
            return shape_err(format!("frame count mismatch: cnn {t}, lstm {tl}"));
        }
        let (cv, lv) = (self.value(cnn).data(), self.value(lstm).data());
        let width = f * c + n;
        let mut out = Vec::with_capacity(t * width);
        for ti in 0..t {
            out.extend_from_slice(&cv[ti * f * c..(ti + 1) * f * c]);
            out.extend_from_slice(&lv[ti * n..(ti + 1) * n]);
        }
        let value = Tensor::new(vec![t, width], out)?;
        Ok(self.push(value, Op::ConcatFlatten { cnn, lstm }, &[cnn, lstm]))
    }

    /// Affine map of the trailing axis: `x·w + b` with `w` in×out.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let input = self.value(x).last_dim();
        let [win, out] = dims2(self.value(w), "linear weight")?;
        if win != input || self.value(b).shape() != [out] {
            return shape_err(format!(
                "linear {win}→{out} (bias {:?}) applied to trailing axis {input}",
                self.value(b).shape()
            ));
        }
        let rows = self.value(x).len() / input.max(1);
        let mut y = vec![0.0; rows * out];
        gemm(rows, input, out, self.value(x).data(), false, self.value(w).data(), false, 0.0, &mut y);
        let bias = self.value(b).data();
        for row in y.chunks_mut(out.max(1)) {
            for (o, bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let mut shape = self.value(x).shape().to_vec();
        *shape.last_mut().unwrap() = out;
        let value = Tensor::new(shape, y)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// One LSTM direction over a T×Din sequence. Gate blocks in `w_ih`
    /// (Din×4N), `w_hh` (N×4N) and `b` (4N) are ordered input, forget,
    /// candidate, output. Initial hidden and cell states are zero.
    pub fn lstm(&mut self, x: Var, weights: LstmWeights, reverse: bool) -> Result<Var, NnError> {
        let LstmWeights { w_ih, w_hh, b } = weights;
        let [t, din] = dims2(self.value(x), "lstm input")?;
        let [wi, g4] = dims2(self.value(w_ih), "lstm input weight")?;
        let n = g4 / 4;
        if wi != din || g4 != 4 * n || n == 0 {
            return shape_err(format!("lstm input weight {wi}×{g4} for input width {din}"));
        }
        if self.value(w_hh).shape() != [n, 4 * n] || self.value(b).shape() != [4 * n] {
            return shape_err("lstm recurrent weight or bias has the wrong shape");
        }
        let (out, cache) = lstm_forward(
            self.value(x).data(),
            self.value(w_ih).data(),
            self.value(w_hh).data(),
            self.value(b).data(),
            t,
            din,
            n,
            reverse,
        );
        let value = Tensor::new(vec![t, n], out)?;
        Ok(self.push(value, Op::Lstm { x, w_ih, w_hh, b, cache }, &[x, w_ih, w_hh, b]))
    }

    /// Uni- or bi-directional layer; the backward pass runs on the reversed
    /// sequence and is concatenated per frame after the forward output.
    pub fn lstm_layer(
        &mut self,
        x: Var,
        forward: LstmWeights,
        backward: Option<LstmWeights>,
    ) -> Result<Var, NnError> {
        let fw = self.lstm(x, forward, false)?;
        match backward {
            Some(bw) => {
                let bw = self.lstm(x, bw, true)?;
                self.concat_last(fw, bw)
            }
            None => Ok(fw),
        }
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NnError> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Scales each trailing vector to unit length (divisor floored at 1e-12).
    pub fn unit_normalize(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let d = src.last_dim().max(1);
        let mut out = src.data().to_vec();
        let mut norms = Vec::with_capacity(out.len() / d);
        for row in out.chunks_mut(d) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let div = norm.max(NORM_FLOOR);
            for v in row.iter_mut() {
                *v /= div;
            }
            norms.push(norm);
        }
        let value = Tensor::new(src.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::UnitNormalize { x, norms }, &[x])
    }

    /// Scalar `Σ x·weights` for a constant weight tensor.
    pub fn dot_const(&mut self, x: Var, weights: Tensor) -> Result<Var, NnError> {
        if self.value(x).shape() != weights.shape() {
            return shape_err("dot_const weights must match the input shape");
        }
        let s = self
            .value(x)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum();
        Ok(self.push(Tensor::scalar(s), Op::DotConst { x, weights }, &[x]))
    }

    /// Back-propagates `seed` (∂loss/∂root) through the tape.
    pub fn backward(&self, root: Var, seed: Tensor) -> Result<Gradients, NnError> {
        if seed.shape() != self.value(root).shape() {
            return shape_err(format!(
                "seed gradient {:?} does not match root {:?}",
                seed.shape(),
                self.value(root).shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (v, gv) in self.op_backward(node, &g) {
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&gv),
                    slot => *slot = Some(gv),
                }
            }
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (p, i)))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn op_backward(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, k, b } => {
                let xs = self.value(*x);
                let kv = self.value(*k);
                let [t, f, cin] = dims3(xs, "").unwrap();
                let ks = kv.shape();
                let geom = ConvGeom { t, f, cin, cout: ks[3], kt: ks[0], kf: ks[1] };
                let (rows, p, cout) = (t * f, geom.patch(), geom.cout);
                let gd = g.data();
                let block = geom.block_rows();
                let mut cols = vec![0.0; block * p];
                let mut dk = vec![0.0; p * cout];
                let mut dx = self.needs(*x).then(|| vec![0.0; xs.len()]);
                let mut dcols = dx.as_ref().map(|_| vec![0.0; block * p]);
                let mut start = 0;
                while start < rows {
                    let end = (start + block).min(rows);
                    let n = end - start;
                    let gblock = &gd[start * cout..end * cout];
                    if self.needs(*k) {
                        geom.im2col(xs.data(), start..end, &mut cols[..n * p]);
                        gemm(p, n, cout, &cols[..n * p], true, gblock, false, 1.0, &mut dk);
                    }
                    if let (Some(dx), Some(dcols)) = (dx.as_mut(), dcols.as_mut()) {
                        gemm(n, cout, p, gblock, false, kv.data(), true, 0.0, &mut dcols[..n * p]);
                        geom.col2im(&dcols[..n * p], start..end, dx);
                    }
                    start = end;
                }
                if self.needs(*k) {
                    out.push((*k, Tensor::new(ks.to_vec(), dk).unwrap()));
                }
                if self.needs(*b) {
                    out.push((*b, column_sums(gd, cout)));
                }
                if let Some(dx) = dx {
                    out.push((*x, Tensor::new(xs.shape().to_vec(), dx).unwrap()));
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let d = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(v, gv)| if *v > 0.0 { *gv } else { 0.0 })
                    .collect();
                out.push((*x, Tensor::new(xv.shape().to_vec(), d).unwrap()));
            }
            Op::MaxPool { x, idx } => {
                let mut dx = Tensor::zeros(&idx.in_shape);
                for (i, &pos) in idx.argmax.iter().enumerate() {
                    dx.data_mut()[pos] += g.data()[i];
                }
                out.push((*x, dx));
            }
            Op::Unpool { x, idx } => {
                let d = idx.argmax.iter().map(|&pos| g.data()[pos]).collect();
                out.push((*x, Tensor::new(idx.out_shape.to_vec(), d).unwrap()));
            }
            Op::Upsample { x, rep } => {
                let [_, f, c] = dims3(self.value(*x), "").unwrap();
                let [ot, of, _] = dims3(g, "").unwrap();
                let mut dx = Tensor::zeros(self.value(*x).shape());
                for t in 0..ot {
                    for fo in 0..of {
                        let src = (t * of + fo) * c;
                        let dst = ((t / rep.0) * f + fo / rep.1) * c;
                        for ch in 0..c {
                            dx.data_mut()[dst + ch] += g.data()[src + ch];
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::ConcatLast { a, b } => {
                let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                let (ca, cb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
                let rows: usize = sa[..sa.len() - 1].iter().product();
                let mut da = Vec::with_capacity(rows * ca);
                let mut db = Vec::with_capacity(rows * cb);
                for row in g.data().chunks((ca + cb).max(1)).take(rows) {
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                out.push((*a, Tensor::new(sa.to_vec(), da).unwrap()));
                out.push((*b, Tensor::new(sb.to_vec(), db).unwrap()));
            }
            Op::ConcatBroadcast { cnn, lstm } => {
                let [t, f, c] = dims3(self.value(*cnn), "").unwrap();
                let [_, n] = dims2(self.value(*lstm), "").unwrap();
                let mut dc = Vec::with_capacity(t * f * c);
                let mut dl = vec![0.0; t * n];
                for ti in 0..t {
                    for fi in 0..f {
                        let row = &g.data()[(ti * f + fi) * (c + n)..(ti * f + fi + 1) * (c + n)];
                        dc.extend_from_slice(&row[..c]);
                        for (d, v) in dl[ti * n..(ti + 1) * n].iter_mut().zip(&row[c..]) {
                            *d += v;
                        }
                    }
                }
                out.push((*cnn, Tensor::new(vec![t, f, c], dc).unwrap()));
                out.push((*lstm, Tensor::new(vec![t, n], dl).unwrap()));
            }
            Op::ConcatFlatten { cnn, lstm } => {
                let [t, f, c] = dims3(self.value(*cnn), "").unwrap();
                let [_, n] = dims2(self.value(*lstm), "").unwrap();
                let width = f * c + n;
                let mut dc = Vec::with_capacity(t * f * c);
                let mut dl = Vec::with_capacity(t * n);
                for ti in 0..t {
                    let row = &g.data()[ti * width..(ti + 1) * width];
                    dc.extend_from_slice(&row[..f * c]);
                    dl.extend_from_slice(&row[f * c..]);
                }
                out.push((*cnn, Tensor::new(vec![t, f, c], dc).unwrap()));
                out.push((*lstm, Tensor::new(vec![t, n], dl).unwrap()));
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let [input, outd] = dims2(wv, "").unwrap();
                let rows = xv.len() / input.max(1);
                if self.needs(*w) {
                    let mut dw = vec![0.0; input * outd];
                    gemm(input, rows, outd, xv.data(), true, g.data(), false, 0.0, &mut dw);
                    out.push((*w, Tensor::new(vec![input, outd], dw).unwrap()));
                }
                if self.needs(*b) {
                    out.push((*b, column_sums(g.data(), outd)));
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0; rows * input];
                    gemm(rows, outd, input, g.data(), false, wv.data(), true, 0.0, &mut dx);
                    out.push((*x, Tensor::new(xv.shape().to_vec(), dx).unwrap()));
                }
            }
            Op::Lstm { x, w_ih, w_hh, b, cache } => {
                let [t, din] = dims2(self.value(*x), "").unwrap();
                let n = self.value(*w_hh).shape()[0];
                let grads = lstm_backward(
                    g.data(),
                    self.value(*x).data(),
                    self.value(*w_ih).data(),
                    self.value(*w_hh).data(),
                    node.value.data(),
                    cache,
                    t,
                    din,
                    n,
                    self.needs(*x),
                );
                out.push((*w_ih, Tensor::new(vec![din, 4 * n], grads.w_ih).unwrap()));
                out.push((*w_hh, Tensor::new(vec![n, 4 * n], grads.w_hh).unwrap()));
                out.push((*b, Tensor::new(vec![4 * n], grads.b).unwrap()));
                if let Some(dx) = grads.x {
                    out.push((*x, Tensor::new(vec![t, din], dx).unwrap()));
                }
            }
            Op::Reshape(x) => {
                out.push((*x, g.clone().reshape(self.value(*x).shape()).unwrap()));
            }
            Op::UnitNormalize { x, norms } => {
                let y = &node.value;
                let d = y.last_dim().max(1);
                let mut dx = Vec::with_capacity(y.len());
                for ((yr, gr), &norm) in y.data().chunks(d).zip(g.data().chunks(d)).zip(norms) {
                    if norm > NORM_FLOOR {
                        let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        dx.extend(yr.iter().zip(gr).map(|(yv, gv)| (gv - yv * proj) / norm));
                    } else {
                        dx.extend(gr.iter().map(|gv| gv / NORM_FLOOR));
                    }
                }
                out.push((*x, Tensor::new(y.shape().to_vec(), dx).unwrap()));
            }
            Op::DotConst { x, weights } => {
                let s = g.data()[0];
                let d = weights.data().iter().map(|w| w * s).collect();
                out.push((*x, Tensor::new(weights.shape().to_vec(), d).unwrap()));
            }
        }
        out.retain(|(v, _)| self.needs(*v));
        out
    }
}

fn column_sums(data: &[f64], cols: usize) -> Tensor {
    let mut s = vec![0.0; cols];
    if cols > 0 {
        for row in data.chunks(cols) {
            for (a, b) in s.iter_mut().zip(row) {
                *a += b;
            }
        }
    }
    Tensor::new(vec![cols], s).unwrap()
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of a leaf, if any flowed into it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradients aligned with `store`; parameters untouched by the pass
    /// (or used without a gradient path) get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = (0..store.len()).map(|i| Tensor::zeros(store.get(i).shape())).collect();
        for &(p, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                out[p].add_assign(g);
            }
        }
        out
    }
}
