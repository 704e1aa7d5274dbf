use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::param_layout;
use super::{Concat, ModelError, ModelSpec, Upsampling};
use crate::dcloss::EmbeddingField;
use crate::dsp::FeatureSeq;
use crate::nncore::{Graph, LstmWeights, ParamStore, PoolIndices, Tensor, Var};

/// A resolved network together with its weights.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamStore,
}

/// Allocates and initializes the weights of `spec`.
///
/// Weights are uniform in ±1/√fan_in and biases zero, except the LSTM
/// forget gate bias, which starts at 1, and the output bias, which is drawn
/// like the output weights so that an all-zero hidden layer still yields a
/// normalizable embedding.
pub fn build(spec: &ModelSpec, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let mut out_bound = 1.0;
    for (name, shape) in param_layout(spec) {
        let len: usize = shape.iter().product();
        let mut data = vec![0.0; len];
        if name.ends_with(".kernel") || name.ends_with(".w") || name.ends_with(".w_ih") || name.ends_with(".w_hh") {
            let fan_in = if name.starts_with("lstm.") {
                // input width plus recurrent width feed every gate
                let layer: usize = name[6..name.find(".fw").or(name.find(".bw")).unwrap()]
                    .parse()
                    .expect("layer index");
                spec.lstm[layer].input + spec.lstm[layer].cells
            } else if name.ends_with(".kernel") {
                shape[0] * shape[1] * shape[2]
            } else {
                shape[0]
            };
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in data.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
            if name == "fc.out.w" {
                out_bound = bound;
            }
        } else if name == "fc.out.b" {
            for v in data.iter_mut() {
                *v = rng.random_range(-out_bound..=out_bound);
            }
        } else if name.starts_with("lstm.") {
            let n = len / 4;
            data[n..2 * n].fill(1.0);
        }
        params.add(name, Tensor::new(shape, data).expect("layout shape"));
    }
    Model { spec: spec.clone(), params }
}

impl Model {
    /// Wraps existing weights, checking them against the layout of `spec`.
    pub fn from_params(spec: ModelSpec, params: ParamStore) -> Result<Self, ModelError> {
        let layout = param_layout(&spec);
        let ok = layout.len() == params.len()
            && layout
                .iter()
                .zip(params.iter())
                .all(|((n, s), (pn, pt))| n == pn && s.as_slice() == pt.shape());
        if !ok {
            return Err(ModelError::InvalidConfig("weights do not match the architecture".into()));
        }
        Ok(Self { spec, params })
    }

    fn p(&self, g: &mut Graph, name: &str) -> Var {
        let id = self.params.id(name).expect("parameter from layout");
        g.param(&self.params, id)
    }

    /// Records the forward pass of a T×F feature sequence and returns the
    /// T×F×D embedding node.
    pub fn forward(&self, g: &mut Graph, input: &FeatureSeq) -> Result<Var, ModelError> {
        let spec = &self.spec;
        let (t, f) = (input.frames, input.bins);
        if f != spec.freq_bins {
            return Err(ModelError::InvalidConfig(format!(
                "model expects {} frequency bins, got {f}",
                spec.freq_bins
            )));
        }
        let x = g.constant(Tensor::new(vec![t, f], input.values.clone())?);

        let cnn = if spec.has_cnn() { Some(self.cnn_branch(g, x, t, f)?) } else { None };
        let lstm = if spec.has_lstm() { Some(self.lstm_branch(g, x)?) } else { None };

        let mut h = match (cnn, lstm, spec.concat) {
            (Some(c), Some(l), Concat::Broadcast) => g.concat_broadcast(c, l)?,
            (Some(c), Some(l), Concat::Flattening) => g.concat_flatten(c, l)?,
            (Some(c), None, Concat::Broadcast) => c,
            (Some(c), None, Concat::Flattening) => g.reshape(c, &[t, f * spec.cnn_channels()])?,
            (None, Some(l), Concat::Flattening) => l,
            (None, Some(l), Concat::Broadcast) => {
                let empty = g.constant(Tensor::zeros(&[t, f, 0]));
                g.concat_broadcast(empty, l)?
            }
            (None, None, _) => unreachable!("resolve rejects models without branches"),
        };

        for l in 0..spec.fc.len() {
            let (w, b) = (self.p(g, &format!("fc.l{l}.w")), self.p(g, &format!("fc.l{l}.b")));
            h = g.linear(h, w, b)?;
            h = g.relu(h);
        }
        let (w, b) = (self.p(g, "fc.out.w"), self.p(g, "fc.out.b"));
        h = g.linear(h, w, b)?;
        if spec.concat == Concat::Flattening {
            h = g.reshape(h, &[t, f, spec.embed_dim])?;
        }
        Ok(g.unit_normalize(h))
    }

    fn conv(&self, g: &mut Graph, x: Var, name: &str) -> Result<Var, ModelError> {
        let k = self.p(g, &format!("{name}.kernel"));
        let b = self.p(g, &format!("{name}.bias"));
        let y = g.conv2d(x, k, b)?;
        Ok(g.relu(y))
    }

    fn cnn_branch(&self, g: &mut Graph, x: Var, t: usize, f: usize) -> Result<Var, ModelError> {
        let spec = &self.spec;
        let mut h = g.reshape(x, &[t, f, 1])?;
        let mut skips = Vec::with_capacity(spec.encoder.len());
        let mut pools: Vec<Option<PoolIndices>> = Vec::with_capacity(spec.encoder.len());
        for (l, layer) in spec.encoder.iter().enumerate() {
            h = self.conv(g, h, &format!("cnn.enc{l}"))?;
            skips.push(h);
            if layer.pool_t || layer.pool_f {
                let (pt, pf) = (1 + layer.pool_t as usize, 1 + layer.pool_f as usize);
                let (y, idx) = g.maxpool(h, pt, pf)?;
                h = y;
                pools.push(Some(idx));
            } else {
                pools.push(None);
            }
        }
        let n = spec.encoder.len();
        for j in 0..n {
            let l = n - 1 - j;
            if let Some(idx) = &pools[l] {
                h = match spec.upsampling {
                    Upsampling::Unpooling => g.unpool(h, idx)?,
                    Upsampling::Bypass | Upsampling::None => {
                        let [ti, fi, _] = idx.in_shape;
                        g.upsample_nearest(h, idx.pool.0, idx.pool.1, ti, fi)?
                    }
                };
            }
            if spec.upsampling == Upsampling::Bypass {
                h = g.concat_last(h, skips[l])?;
            }
            h = self.conv(g, h, &format!("cnn.dec{j}"))?;
        }
        Ok(h)
    }

    fn lstm_branch(&self, g: &mut Graph, x: Var) -> Result<Var, ModelError> {
        let mut h = x;
        for (l, layer) in self.spec.lstm.iter().enumerate() {
            let dir = |g: &mut Graph, d: &str| LstmWeights {
                w_ih: self.p(g, &format!("lstm.l{l}.{d}.w_ih")),
                w_hh: self.p(g, &format!("lstm.l{l}.{d}.w_hh")),
                b: self.p(g, &format!("lstm.l{l}.{d}.b")),
            };
            let fw = dir(g, "fw");
            let bw = layer.bidirectional.then(|| dir(g, "bw"));
            h = g.lstm_layer(h, fw, bw)?;
        }
        Ok(h)
    }

    /// Embeddings of one utterance without keeping the tape.
    pub fn embed(&self, input: &FeatureSeq) -> Result<EmbeddingField, ModelError> {
        let mut g = Graph::new();
        let v = self.forward(&mut g, input)?;
        let t = g.value(v);
        Ok(EmbeddingField {
            frames: t.shape()[0],
            bins: t.shape()[1],
            dim: t.shape()[2],
            values: t.data().to_vec(),
        })
    }
}
