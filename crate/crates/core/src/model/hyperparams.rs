use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsampling {
    Bypass,
    Unpooling,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Uni,
    Bi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concat {
    Broadcast,
    Flattening,
}

impl Upsampling {
    pub const ALL: [Upsampling; 3] = [Upsampling::Bypass, Upsampling::Unpooling, Upsampling::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Upsampling::Bypass => "bypass",
            Upsampling::Unpooling => "unpooling",
            Upsampling::None => "none",
        }
    }
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Uni, Direction::Bi];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Uni => "uni",
            Direction::Bi => "bi",
        }
    }

    pub fn count(self) -> usize {
        match self {
            Direction::Uni => 1,
            Direction::Bi => 2,
        }
    }
}

impl Concat {
    pub const ALL: [Concat; 2] = [Concat::Broadcast, Concat::Flattening];

    pub fn as_str(self) -> &'static str {
        match self {
            Concat::Broadcast => "broadcast",
            Concat::Flattening => "flattening",
        }
    }
}

/// One point of the architecture search space.
///
/// Fields that are inactive for a given point (for instance every CNN field
/// when `num_enc_layers` is 0) are carried but ignored, and serialize as
/// `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawHyperParams", from = "RawHyperParams")]
pub struct HyperParams {
    pub num_enc_layers: usize,
    pub first_enc_channels: usize,
    pub channel_factor: f64,
    pub last_dec_channels: usize,
    pub kernel_t: usize,
    pub kernel_t_decay: f64,
    pub kernel_f: usize,
    pub kernel_f_decay: f64,
    pub pool_period_t: usize,
    pub pool_period_f: usize,
    pub upsampling: Upsampling,
    pub lstm_layers: usize,
    pub lstm_first_cells: usize,
    pub lstm_cell_factor: f64,
    pub lstm_direction: Direction,
    pub concat: Concat,
    pub fc_layers: usize,
    pub fc_first_units: usize,
    pub fc_unit_factor: f64,
}

/// Field names in declaration order.
pub const FIELD_NAMES: [&str; 19] = [
    "num_enc_layers",
    "first_enc_channels",
    "channel_factor",
    "last_dec_channels",
    "kernel_t",
    "kernel_t_decay",
    "kernel_f",
    "kernel_f_decay",
    "pool_period_t",
    "pool_period_f",
    "upsampling",
    "lstm_layers",
    "lstm_first_cells",
    "lstm_cell_factor",
    "lstm_direction",
    "concat",
    "fc_layers",
    "fc_first_units",
    "fc_unit_factor",
];

/// Inclusive ranges of the integer fields.
pub mod ranges {
    pub const NUM_ENC_LAYERS: (usize, usize) = (0, 6);
    pub const FIRST_ENC_CHANNELS: (usize, usize) = (1, 2000);
    pub const CHANNEL_FACTOR: (f64, f64) = (0.5, 3.0);
    pub const LAST_DEC_CHANNELS: (usize, usize) = (1, 200);
    pub const KERNEL: (usize, usize) = (1, 15);
    pub const KERNEL_DECAY: (f64, f64) = (0.83, 3.33);
    pub const POOL_PERIOD: (usize, usize) = (1, 7);
    pub const LSTM_LAYERS: (usize, usize) = (0, 6);
    pub const LSTM_FIRST_CELLS: (usize, usize) = (1, 2000);
    pub const LSTM_CELL_FACTOR: (f64, f64) = (0.5, 3.0);
    pub const FC_LAYERS: (usize, usize) = (0, 3);
    pub const FC_FIRST_UNITS: (usize, usize) = (1, 1024);
    pub const FC_UNIT_FACTOR: (f64, f64) = (0.3, 2.0);
}

impl Default for HyperParams {
    /// The lower corner of the space (a one-layer LSTM when both branch
    /// counts would otherwise be zero is not implied; see [`HyperParams::validate`]).
    fn default() -> Self {
        use ranges::*;
        Self {
            num_enc_layers: NUM_ENC_LAYERS.0,
            first_enc_channels: FIRST_ENC_CHANNELS.0,
            channel_factor: CHANNEL_FACTOR.0,
            last_dec_channels: LAST_DEC_CHANNELS.0,
            kernel_t: KERNEL.0,
            kernel_t_decay: KERNEL_DECAY.0,
            kernel_f: KERNEL.0,
            kernel_f_decay: KERNEL_DECAY.0,
            pool_period_t: POOL_PERIOD.0,
            pool_period_f: POOL_PERIOD.0,
            upsampling: Upsampling::Bypass,
            lstm_layers: LSTM_LAYERS.0,
            lstm_first_cells: LSTM_FIRST_CELLS.0,
            lstm_cell_factor: LSTM_CELL_FACTOR.0,
            lstm_direction: Direction::Uni,
            concat: Concat::Broadcast,
            fc_layers: FC_LAYERS.0,
            fc_first_units: FC_FIRST_UNITS.0,
            fc_unit_factor: FC_UNIT_FACTOR.0,
        }
    }
}

fn check_int(name: &str, v: usize, (lo, hi): (usize, usize)) -> Result<(), ModelError> {
    if v < lo || v > hi {
        return Err(ModelError::Range(format!("{name} = {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn check_real(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<(), ModelError> {
    if !(v >= lo && v <= hi) {
        return Err(ModelError::Range(format!("{name} = {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

impl HyperParams {
    pub fn has_cnn(&self) -> bool {
        self.num_enc_layers > 0
    }

    pub fn has_lstm(&self) -> bool {
        self.lstm_layers > 0
    }

    /// Activity flag per field, in [`FIELD_NAMES`] order.
    pub fn active(&self) -> [bool; 19] {
        let cnn = self.has_cnn();
        let deep_cnn = self.num_enc_layers > 1;
        let lstm = self.has_lstm();
        let fc = self.fc_layers > 0;
        [
            true,
            cnn,
            deep_cnn,
            cnn,
            cnn,
            deep_cnn,
            cnn,
            deep_cnn,
            cnn,
            cnn,
            cnn,
            true,
            lstm,
            self.lstm_layers > 1,
            lstm,
            cnn && lstm,
            true,
            fc,
            self.fc_layers > 1,
        ]
    }

    /// Range check of every active field plus the branch-presence rule.
    pub fn validate(&self) -> Result<(), ModelError> {
        use ranges::*;
        let a = self.active();
        check_int("num_enc_layers", self.num_enc_layers, NUM_ENC_LAYERS)?;
        check_int("lstm_layers", self.lstm_layers, LSTM_LAYERS)?;
        check_int("fc_layers", self.fc_layers, FC_LAYERS)?;
        if a[1] {
            check_int("first_enc_channels", self.first_enc_channels, FIRST_ENC_CHANNELS)?;
        }
        if a[2] {
            check_real("channel_factor", self.channel_factor, CHANNEL_FACTOR)?;
            check_real("kernel_t_decay", self.kernel_t_decay, KERNEL_DECAY)?;
            check_real("kernel_f_decay", self.kernel_f_decay, KERNEL_DECAY)?;
        }
        if a[3] {
            check_int("last_dec_channels", self.last_dec_channels, LAST_DEC_CHANNELS)?;
            check_int("kernel_t", self.kernel_t, KERNEL)?;
            check_int("kernel_f", self.kernel_f, KERNEL)?;
            check_int("pool_period_t", self.pool_period_t, POOL_PERIOD)?;
            check_int("pool_period_f", self.pool_period_f, POOL_PERIOD)?;
        }
        if a[12] {
            check_int("lstm_first_cells", self.lstm_first_cells, LSTM_FIRST_CELLS)?;
        }
        if a[13] {
            check_real("lstm_cell_factor", self.lstm_cell_factor, LSTM_CELL_FACTOR)?;
        }
        if a[17] {
            check_int("fc_first_units", self.fc_first_units, FC_FIRST_UNITS)?;
        }
        if a[18] {
            check_real("fc_unit_factor", self.fc_unit_factor, FC_UNIT_FACTOR)?;
        }
        if !self.has_cnn() && !self.has_lstm() {
            return Err(ModelError::InvalidConfig(
                "at least one of the CNN and LSTM branches needs layers".into(),
            ));
        }
        Ok(())
    }

    /// Copy with every inactive field reset to its default value.
    pub fn canonical(&self) -> HyperParams {
        RawHyperParams::from(self.clone()).into()
    }
}

/// Serialized form: inactive fields are `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawHyperParams {
    num_enc_layers: usize,
    first_enc_channels: Option<usize>,
    channel_factor: Option<f64>,
    last_dec_channels: Option<usize>,
    kernel_t: Option<usize>,
    kernel_t_decay: Option<f64>,
    kernel_f: Option<usize>,
    kernel_f_decay: Option<f64>,
    pool_period_t: Option<usize>,
    pool_period_f: Option<usize>,
    upsampling: Option<Upsampling>,
    lstm_layers: usize,
    lstm_first_cells: Option<usize>,
    lstm_cell_factor: Option<f64>,
    lstm_direction: Option<Direction>,
    concat: Option<Concat>,
    fc_layers: usize,
    fc_first_units: Option<usize>,
    fc_unit_factor: Option<f64>,
}

impl From<HyperParams> for RawHyperParams {
    fn from(h: HyperParams) -> Self {
        let a = h.active();
        let on = |i: usize| a[i];
        RawHyperParams {
            num_enc_layers: h.num_enc_layers,
            first_enc_channels: on(1).then_some(h.first_enc_channels),
            channel_factor: on(2).then_some(h.channel_factor),
            last_dec_channels: on(3).then_some(h.last_dec_channels),
            kernel_t: on(4).then_some(h.kernel_t),
            kernel_t_decay: on(5).then_some(h.kernel_t_decay),
            kernel_f: on(6).then_some(h.kernel_f),
            kernel_f_decay: on(7).then_some(h.kernel_f_decay),
            pool_period_t: on(8).then_some(h.pool_period_t),
            pool_period_f: on(9).then_some(h.pool_period_f),
            upsampling: on(10).then_some(h.upsampling),
            lstm_layers: h.lstm_layers,
            lstm_first_cells: on(12).then_some(h.lstm_first_cells),
            lstm_cell_factor: on(13).then_some(h.lstm_cell_factor),
            lstm_direction: on(14).then_some(h.lstm_direction),
            concat: on(15).then_some(h.concat),
            fc_layers: h.fc_layers,
            fc_first_units: on(17).then_some(h.fc_first_units),
            fc_unit_factor: on(18).then_some(h.fc_unit_factor),
        }
    }
}

impl From<RawHyperParams> for HyperParams {
    fn from(r: RawHyperParams) -> Self {
        let d = HyperParams::default();
        HyperParams {
            num_enc_layers: r.num_enc_layers,
            first_enc_channels: r.first_enc_channels.unwrap_or(d.first_enc_channels),
            channel_factor: r.channel_factor.unwrap_or(d.channel_factor),
            last_dec_channels: r.last_dec_channels.unwrap_or(d.last_dec_channels),
            kernel_t: r.kernel_t.unwrap_or(d.kernel_t),
            kernel_t_decay: r.kernel_t_decay.unwrap_or(d.kernel_t_decay),
            kernel_f: r.kernel_f.unwrap_or(d.kernel_f),
            kernel_f_decay: r.kernel_f_decay.unwrap_or(d.kernel_f_decay),
            pool_period_t: r.pool_period_t.unwrap_or(d.pool_period_t),
            pool_period_f: r.pool_period_f.unwrap_or(d.pool_period_f),
            upsampling: r.upsampling.unwrap_or(d.upsampling),
            lstm_layers: r.lstm_layers,
            lstm_first_cells: r.lstm_first_cells.unwrap_or(d.lstm_first_cells),
            lstm_cell_factor: r.lstm_cell_factor.unwrap_or(d.lstm_cell_factor),
            lstm_direction: r.lstm_direction.unwrap_or(d.lstm_direction),
            concat: r.concat.unwrap_or(d.concat),
            fc_layers: r.fc_layers,
            fc_first_units: r.fc_first_units.unwrap_or(d.fc_first_units),
            fc_unit_factor: r.fc_unit_factor.unwrap_or(d.fc_unit_factor),
        }
    }
}
