//! The network-architecture search space and its parameter budget.

use serde::{Deserialize, Serialize};

use super::space::{Dimension, ParamSpace, Value};
use super::HpoError;
use crate::dsp::FREQ_BINS;
use crate::model::{count_params, ranges, resolve, HyperParams, ParamPartition, DEFAULT_EMBED_DIM, SPEAKERS};

/// Inclusive window on the total trainable parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub min_params: u64,
    pub max_params: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            min_params: 14_400_000,
            max_params: 15_200_000,
        }
    }
}

impl Budget {
    pub fn admits(&self, total: u64) -> bool {
        self.min_params <= total && total <= self.max_params
    }
}

fn int((lo, hi): (usize, usize)) -> Dimension {
    Dimension::Integer { lo: lo as i64, hi: hi as i64 }
}

fn real((lo, hi): (f64, f64)) -> Dimension {
    Dimension::Real { lo, hi }
}

fn cat(choices: &[&str]) -> Dimension {
    Dimension::Categorical {
        choices: choices.iter().map(|s| s.to_string()).collect(),
    }
}

/// Upper limits that shrink the search space below the full ranges, for
/// desk-scale searches. `None` keeps the full range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaceLimits {
    pub max_enc_layers: Option<usize>,
    pub max_channels: Option<usize>,
    pub max_lstm_layers: Option<usize>,
    pub max_cells: Option<usize>,
    pub max_fc_layers: Option<usize>,
    pub max_units: Option<usize>,
}

fn capped((lo, hi): (usize, usize), cap: Option<usize>) -> (usize, usize) {
    (lo, cap.map_or(hi, |c| c.clamp(lo, hi)))
}

/// Search space with one dimension per [`HyperParams`] field, in field order.
pub fn architecture_space() -> ParamSpace {
    limited_architecture_space(&SpaceLimits::default())
}

/// [`architecture_space`] with the layer, channel, cell and unit ranges
/// capped by `limits`.
pub fn limited_architecture_space(limits: &SpaceLimits) -> ParamSpace {
    use ranges::*;
    ParamSpace::new(vec![
        ("num_enc_layers", int(capped(NUM_ENC_LAYERS, limits.max_enc_layers))),
        ("first_enc_channels", int(capped(FIRST_ENC_CHANNELS, limits.max_channels))),
        ("channel_factor", real(CHANNEL_FACTOR)),
        ("last_dec_channels", int(capped(LAST_DEC_CHANNELS, limits.max_channels))),
        ("kernel_t", int(KERNEL)),
        ("kernel_t_decay", real(KERNEL_DECAY)),
        ("kernel_f", int(KERNEL)),
        ("kernel_f_decay", real(KERNEL_DECAY)),
        ("pool_period_t", int(POOL_PERIOD)),
        ("pool_period_f", int(POOL_PERIOD)),
        ("upsampling", cat(&["bypass", "unpooling", "none"])),
        ("lstm_layers", int(capped(LSTM_LAYERS, limits.max_lstm_layers))),
        ("lstm_first_cells", int(capped(LSTM_FIRST_CELLS, limits.max_cells))),
        ("lstm_cell_factor", real(LSTM_CELL_FACTOR)),
        ("lstm_direction", cat(&["uni", "bi"])),
        ("concat", cat(&["broadcast", "flattening"])),
        ("fc_layers", int(capped(FC_LAYERS, limits.max_fc_layers))),
        ("fc_first_units", int(capped(FC_FIRST_UNITS, limits.max_units))),
        ("fc_unit_factor", real(FC_UNIT_FACTOR)),
    ])
    .with_activity(|v| values_to_hp(v).active().to_vec())
}

fn as_usize(v: Value) -> usize {
    match v {
        Value::Int(i) => i.max(0) as usize,
        Value::Real(r) => r.max(0.0) as usize,
        Value::Cat(c) => c,
    }
}

fn as_cat(v: Value) -> usize {
    match v {
        Value::Cat(c) => c,
        other => as_usize(other),
    }
}

/// Interprets raw space values as hyperparameters (no range check).
pub fn values_to_hp(v: &[Value]) -> HyperParams {
    use crate::model::{Concat, Direction, Upsampling};
    HyperParams {
        num_enc_layers: as_usize(v[0]),
        first_enc_channels: as_usize(v[1]),
        channel_factor: v[2].as_f64(),
        last_dec_channels: as_usize(v[3]),
        kernel_t: as_usize(v[4]),
        kernel_t_decay: v[5].as_f64(),
        kernel_f: as_usize(v[6]),
        kernel_f_decay: v[7].as_f64(),
        pool_period_t: as_usize(v[8]),
        pool_period_f: as_usize(v[9]),
        upsampling: Upsampling::ALL[as_cat(v[10]).min(2)],
        lstm_layers: as_usize(v[11]),
        lstm_first_cells: as_usize(v[12]),
        lstm_cell_factor: v[13].as_f64(),
        lstm_direction: Direction::ALL[as_cat(v[14]).min(1)],
        concat: Concat::ALL[as_cat(v[15]).min(1)],
        fc_layers: as_usize(v[16]),
        fc_first_units: as_usize(v[17]),
        fc_unit_factor: v[18].as_f64(),
    }
}

pub fn hp_to_values(hp: &HyperParams) -> Vec<Value> {
    let i = |x: usize| Value::Int(x as i64);
    let cat_index = |s: &str, all: &[&str]| Value::Cat(all.iter().position(|c| *c == s).expect("known choice"));
    vec![
        i(hp.num_enc_layers),
        i(hp.first_enc_channels),
        Value::Real(hp.channel_factor),
        i(hp.last_dec_channels),
        i(hp.kernel_t),
        Value::Real(hp.kernel_t_decay),
        i(hp.kernel_f),
        Value::Real(hp.kernel_f_decay),
        i(hp.pool_period_t),
        i(hp.pool_period_f),
        cat_index(hp.upsampling.as_str(), &["bypass", "unpooling", "none"]),
        i(hp.lstm_layers),
        i(hp.lstm_first_cells),
        Value::Real(hp.lstm_cell_factor),
        cat_index(hp.lstm_direction.as_str(), &["uni", "bi"]),
        cat_index(hp.concat.as_str(), &["broadcast", "flattening"]),
        i(hp.fc_layers),
        i(hp.fc_first_units),
        Value::Real(hp.fc_unit_factor),
    ]
}

pub fn encode_hp(hp: &HyperParams, space: &ParamSpace) -> Result<Vec<f64>, HpoError> {
    hp.validate().map_err(|e| HpoError::Range(e.to_string()))?;
    space.encode(&hp_to_values(hp))
}

pub fn decode_hp(x: &[f64], space: &ParamSpace) -> Result<HyperParams, HpoError> {
    Ok(values_to_hp(&space.decode(x)?))
}

/// Parameter partition of the model at the default input geometry, or
/// `None` for an invalid configuration.
pub fn partition(hp: &HyperParams) -> Option<ParamPartition> {
    resolve(hp, FREQ_BINS, DEFAULT_EMBED_DIM, SPEAKERS).ok().map(|s| count_params(&s))
}

/// Feasibility predicate: a valid configuration whose size lies in `budget`
/// (or any valid configuration when `budget` is `None`).
pub fn budget_feasibility(budget: Option<Budget>) -> impl Fn(&[Value]) -> bool {
    move |v: &[Value]| match partition(&values_to_hp(v)) {
        Some(p) => budget.is_none_or(|b| b.admits(p.total)),
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encoded_width() {
        assert_eq!(architecture_space().encoded_len(), 16 + 3 + 2 + 2);
    }

    #[test]
    fn random_configs_roundtrip() {
        let space = architecture_space();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let v = space.sample(&mut rng);
            let hp = values_to_hp(&v);
            if hp.validate().is_err() {
                continue;
            }
            let x = encode_hp(&hp, &space).unwrap();
            assert!(x.iter().all(|c| (0.0..=1.0).contains(c)));
            let back = hp_to_values(&decode_hp(&x, &space).unwrap());
            for (a, b) in back.iter().zip(hp_to_values(&hp)) {
                match (a, b) {
                    // min-max scaling roundtrips reals up to rounding
                    (Value::Real(a), Value::Real(b)) => assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0)),
                    (a, b) => assert_eq!(*a, b),
                }
            }
        }
    }

    #[test]
    fn limits_cap_the_ranges() {
        let limits = SpaceLimits {
            max_channels: Some(8),
            max_cells: Some(16),
            ..SpaceLimits::default()
        };
        let space = limited_architecture_space(&limits);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let hp = values_to_hp(&space.sample(&mut rng));
            assert!(hp.first_enc_channels <= 8 && hp.last_dec_channels <= 8);
            assert!(hp.lstm_first_cells <= 16);
        }
    }

    #[test]
    fn midpoint_decoding() {
        let space = architecture_space();
        let hp = decode_hp(&vec![0.5; space.encoded_len()], &space).unwrap();
        assert_eq!(hp.num_enc_layers, 3);
        assert_eq!(hp.first_enc_channels, 1001);
        assert_eq!(hp.lstm_layers, 3);
        assert_eq!(hp.fc_layers, 2);
        assert!((hp.channel_factor - 1.75).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_encodes_to_zero() {
        let space = architecture_space();
        let hp = HyperParams {
            num_enc_layers: 2,
            lstm_layers: 2,
            fc_layers: 2,
            ..HyperParams::default()
        };
        let x = encode_hp(&hp, &space).unwrap();
        // all scaled numeric dims except the three layer counts sit at 0
        let numeric = [1, 2, 3, 4, 5, 6, 7, 8, 9, 14, 15, 21, 22];
        for i in numeric {
            assert_eq!(x[i], 0.0, "coordinate {i}");
        }
    }
}
