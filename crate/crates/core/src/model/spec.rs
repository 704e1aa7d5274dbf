use serde::{Deserialize, Serialize};

use super::{Concat, HyperParams, ModelError, Upsampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_t: usize,
    pub kernel_f: usize,
}

impl ConvLayer {
    pub fn params(&self) -> u64 {
        (self.kernel_t as u64 * self.kernel_f as u64 * self.in_channels as u64 + 1) * self.out_channels as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub conv: ConvLayer,
    /// Max-pool by 2 along time after this layer.
    pub pool_t: bool,
    /// Max-pool by 2 along frequency after this layer.
    pub pool_f: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input: usize,
    pub cells: usize,
    pub bidirectional: bool,
}

impl LstmLayer {
    pub fn output(&self) -> usize {
        self.cells * if self.bidirectional { 2 } else { 1 }
    }

    pub fn params(&self) -> u64 {
        let (i, n) = (self.input as u64, self.cells as u64);
        let dirs = if self.bidirectional { 2 } else { 1 };
        dirs * 4 * ((i + n) * n + n)
    }
}

/// Fully resolved network geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub freq_bins: usize,
    pub embed_dim: usize,
    pub speakers: usize,
    pub encoder: Vec<EncoderLayer>,
    /// Decoder layers in execution order; entry `j` undoes encoder layer
    /// `L - 1 - j`.
    pub decoder: Vec<ConvLayer>,
    pub upsampling: Upsampling,
    pub lstm: Vec<LstmLayer>,
    pub concat: Concat,
    /// Hidden FC widths; the output layer is implied by `concat`.
    pub fc: Vec<usize>,
}

/// Trainable parameter counts per branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamPartition {
    pub cnn_params: u64,
    pub lstm_params: u64,
    pub fc_params: u64,
    pub total: u64,
}

impl ParamPartition {
    pub fn cnn_fraction(&self) -> f64 {
        self.cnn_params as f64 / self.total as f64
    }

    pub fn lstm_fraction(&self) -> f64 {
        self.lstm_params as f64 / self.total as f64
    }
}

impl ModelSpec {
    pub fn has_cnn(&self) -> bool {
        !self.encoder.is_empty()
    }

    pub fn has_lstm(&self) -> bool {
        !self.lstm.is_empty()
    }

    /// Channels leaving the CNN branch (0 without one).
    pub fn cnn_channels(&self) -> usize {
        self.decoder.last().map_or(0, |d| d.out_channels)
    }

    /// Width of the LSTM branch output (0 without one).
    pub fn lstm_width(&self) -> usize {
        self.lstm.last().map_or(0, |l| l.output())
    }

    /// Input width of the FC head.
    pub fn head_input(&self) -> usize {
        match self.concat {
            Concat::Broadcast => self.cnn_channels() + self.lstm_width(),
            Concat::Flattening => self.freq_bins * self.cnn_channels() + self.lstm_width(),
        }
    }

    /// Output width of the FC head.
    pub fn head_output(&self) -> usize {
        match self.concat {
            Concat::Broadcast => self.embed_dim,
            Concat::Flattening => self.freq_bins * self.embed_dim,
        }
    }

    /// `(in, out)` of every FC layer including the output layer.
    pub fn fc_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.fc.len() + 1);
        let mut input = self.head_input();
        for &w in &self.fc {
            shapes.push((input, w));
            input = w;
        }
        shapes.push((input, self.head_output()));
        shapes
    }
}

/// Geometric progression term `round(first · factor^(l-1))`, at least 1.
fn progression(first: usize, factor: f64, l: usize) -> usize {
    let v = (first as f64 * factor.powi(l as i32 - 1)).round();
    (v as usize).max(1)
}

fn decayed(k0: usize, decay: f64, pools: usize) -> usize {
    ((k0 as f64 / decay.powi(pools as i32)).round() as usize).max(1)
}

/// Resolves a hyperparameter point for `freq_bins` inputs, `embed_dim`
/// outputs per bin and `speakers` sources.
///
/// A model with only one branch has no concatenation choice: CNN-only
/// models use the shared (broadcast) head, LSTM-only models the per-frame
/// (flattening) head.
pub fn resolve(hp: &HyperParams, freq_bins: usize, embed_dim: usize, speakers: usize) -> Result<ModelSpec, ModelError> {
    hp.validate()?;
    if freq_bins == 0 || embed_dim == 0 {
        return Err(ModelError::InvalidConfig("F and D must be positive".into()));
    }
    let n = hp.num_enc_layers;
    let mut encoder = Vec::with_capacity(n);
    let (mut pooled_t, mut pooled_f) = (0, 0);
    let mut prev = 1;
    for l in 1..=n {
        let conv = ConvLayer {
            in_channels: prev,
            out_channels: progression(hp.first_enc_channels, hp.channel_factor, l),
            kernel_t: decayed(hp.kernel_t, hp.kernel_t_decay, pooled_t),
            kernel_f: decayed(hp.kernel_f, hp.kernel_f_decay, pooled_f),
        };
        let layer = EncoderLayer {
            conv,
            pool_t: l % hp.pool_period_t == 0,
            pool_f: l % hp.pool_period_f == 0,
        };
        pooled_t += layer.pool_t as usize;
        pooled_f += layer.pool_f as usize;
        prev = conv.out_channels;
        encoder.push(layer);
    }
    let mut decoder = Vec::with_capacity(n);
    for l in (0..n).rev() {
        let enc = encoder[l].conv;
        let skip = if hp.upsampling == Upsampling::Bypass { enc.out_channels } else { 0 };
        decoder.push(ConvLayer {
            in_channels: enc.out_channels + skip,
            out_channels: if l == 0 { hp.last_dec_channels } else { encoder[l - 1].conv.out_channels },
            kernel_t: enc.kernel_t,
            kernel_f: enc.kernel_f,
        });
    }
    let bidirectional = hp.lstm_direction == super::Direction::Bi;
    let mut lstm = Vec::with_capacity(hp.lstm_layers);
    let mut input = freq_bins;
    for l in 1..=hp.lstm_layers {
        let layer = LstmLayer {
            input,
            cells: progression(hp.lstm_first_cells, hp.lstm_cell_factor, l),
            bidirectional,
        };
        input = layer.output();
        lstm.push(layer);
    }
    let concat = match (n > 0, hp.lstm_layers > 0) {
        (true, true) => hp.concat,
        (true, false) => Concat::Broadcast,
        _ => Concat::Flattening,
    };
    let fc = (1..=hp.fc_layers)
        .map(|l| progression(hp.fc_first_units, hp.fc_unit_factor, l))
        .collect();
    Ok(ModelSpec {
        freq_bins,
        embed_dim,
        speakers,
        encoder,
        decoder,
        upsampling: hp.upsampling,
        lstm,
        concat,
        fc,
    })
}

/// Exact trainable parameter count per branch, from the layer formulas.
pub fn count_params(spec: &ModelSpec) -> ParamPartition {
    let cnn: u64 = spec.encoder.iter().map(|e| e.conv.params()).sum::<u64>()
        + spec.decoder.iter().map(ConvLayer::params).sum::<u64>();
    let lstm: u64 = spec.lstm.iter().map(LstmLayer::params).sum();
    let fc: u64 = spec.fc_shapes().iter().map(|&(i, o)| (i as u64 + 1) * o as u64).sum();
    ParamPartition {
        cnn_params: cnn,
        lstm_params: lstm,
        fc_params: fc,
        total: cnn + lstm + fc,
    }
}

/// Name and shape of every trainable tensor, in allocation order.
/// Names start with the branch (`cnn.`, `lstm.`, `fc.`).
pub fn param_layout(spec: &ModelSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let conv = |out: &mut Vec<(String, Vec<usize>)>, name: String, c: &ConvLayer| {
        out.push((
            format!("{name}.kernel"),
            vec![c.kernel_t, c.kernel_f, c.in_channels, c.out_channels],
        ));
        out.push((format!("{name}.bias"), vec![c.out_channels]));
    };
    for (l, e) in spec.encoder.iter().enumerate() {
        conv(&mut out, format!("cnn.enc{l}"), &e.conv);
    }
    for (j, d) in spec.decoder.iter().enumerate() {
        conv(&mut out, format!("cnn.dec{j}"), d);
    }
    for (l, layer) in spec.lstm.iter().enumerate() {
        let dirs: &[&str] = if layer.bidirectional { &["fw", "bw"] } else { &["fw"] };
        for d in dirs {
            let n = layer.cells;
            out.push((format!("lstm.l{l}.{d}.w_ih"), vec![layer.input, 4 * n]));
            out.push((format!("lstm.l{l}.{d}.w_hh"), vec![n, 4 * n]));
            out.push((format!("lstm.l{l}.{d}.b"), vec![4 * n]));
        }
    }
    let shapes = spec.fc_shapes();
    let last = shapes.len() - 1;
    for (l, &(i, o)) in shapes.iter().enumerate() {
        let name = if l == last { "fc.out".to_string() } else { format!("fc.l{l}") };
        out.push((format!("{name}.w"), vec![i, o]));
        out.push((format!("{name}.b"), vec![o]));
    }
    out
}
