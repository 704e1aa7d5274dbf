use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use dcsep::dsp::SynthConfig;
use dcsep::hyperopt::{BoConfig, Budget, SpaceLimits};
use dcsep::model::{Concat, Direction, HyperParams, Upsampling, DEFAULT_EMBED_DIM};
use dcsep::trainer::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds corpus synthesis, weight initialization, training and the search.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub hpo: HpoSection,
    pub eval: EvalSection,
    pub report: ReportSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            hpo: HpoSection::default(),
            eval: EvalSection::default(),
            report: ReportSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Corpus directory: written by `synth`, read by every other command.
    pub dir: PathBuf,
    /// Generator settings. Set `source_dir` to mix real WAV files instead of
    /// the synthetic voices.
    pub synth: SynthConfig,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            synth: SynthConfig::default(),
        }
    }
}

/// Either one fixed architecture or a search over the architecture space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    Fixed {
        hyperparams: HyperParams,
        #[serde(default = "default_embed_dim")]
        embed_dim: usize,
    },
    Search,
}

fn default_embed_dim() -> usize {
    DEFAULT_EMBED_DIM
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection::Fixed {
            hyperparams: desk_model(),
            embed_dim: DEFAULT_EMBED_DIM,
        }
    }
}

/// A small parallel CNN-LSTM that trains in minutes on one core.
pub fn desk_model() -> HyperParams {
    HyperParams {
        num_enc_layers: 2,
        first_enc_channels: 8,
        channel_factor: 2.0,
        last_dec_channels: 8,
        kernel_t: 5,
        kernel_t_decay: 1.0,
        kernel_f: 5,
        kernel_f_decay: 1.0,
        pool_period_t: 1,
        pool_period_f: 1,
        upsampling: Upsampling::Bypass,
        lstm_layers: 1,
        lstm_first_cells: 48,
        lstm_cell_factor: 1.0,
        lstm_direction: Direction::Bi,
        concat: Concat::Broadcast,
        fc_layers: 0,
        fc_first_units: 1,
        fc_unit_factor: 1.0,
    }
    .canonical()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoSection {
    /// Parameter window for proposals; `null` disables the constraint.
    pub budget: Option<Budget>,
    /// Range caps for desk-scale searches.
    pub limits: SpaceLimits,
    pub bo: BoConfig,
}

impl Default for HpoSection {
    fn default() -> Self {
        Self {
            budget: Some(Budget::default()),
            limits: SpaceLimits::default(),
            bo: BoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Corpus split that `separate` and `evaluate` operate on.
    pub split: String,
    /// Where `separate` writes and `evaluate` reads estimates; defaults to
    /// `<output_dir>/separated`.
    pub estimates_dir: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            split: "test".into(),
            estimates_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Defaults to `<output_dir>/ledger.jsonl`.
    pub ledger: Option<PathBuf>,
    pub group_by: Vec<String>,
    pub top_k: usize,
    /// Minimum share of parameters in the gating branch; `null` uses the
    /// per-field default.
    pub min_fraction: Option<f64>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            ledger: None,
            group_by: vec!["upsampling".into(), "concat".into(), "lstm_direction".into()],
            top_k: 5,
            min_fraction: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (or starts from the defaults) and applies `key=value`
    /// overrides. Values are parsed as JSON and fall back to plain strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let base: ExperimentConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|_| CliError::Missing(p.to_path_buf()))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        let mut value = serde_json::to_value(&base)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn estimates_dir(&self) -> PathBuf {
        self.eval.estimates_dir.clone().unwrap_or_else(|| self.output_dir.join("separated"))
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.report.ledger.clone().unwrap_or_else(|| self.output_dir.join("ledger.jsonl"))
    }
}

/// Sets the dotted `section.key=value` path inside a JSON object, creating
/// intermediate objects as needed.
pub fn apply_override(root: &mut Json, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("malformed key {path:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Json::String(raw.to_string()));
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        if node.is_null() {
            *node = Json::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("{path:?}: {key:?} is not a section")))?;
        node = obj.entry(key.to_string()).or_insert(Json::Null);
    }
    if node.is_null() {
        *node = Json::Object(Default::default());
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("{path:?} does not name a key")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        assert!(desk_model().validate().is_ok());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = ExperimentConfig::load(
            None,
            &[
                "seed=7".into(),
                "hpo.bo.n_init=3".into(),
                "output_dir=out/x".into(),
                "hpo.budget=null".into(),
                "model.hyperparams.lstm_first_cells=12".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.hpo.bo.n_init, 3);
        assert_eq!(cfg.output_dir, PathBuf::from("out/x"));
        assert_eq!(cfg.hpo.budget, None);
        let ModelSection::Fixed { hyperparams, .. } = cfg.model else { panic!() };
        assert_eq!(hyperparams.lstm_first_cells, 12);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for o in ["seed", "nosuch=1", "seed.x=1", "train.lr=-1", "model.mode=other"] {
            let e = ExperimentConfig::load(None, &[o.into()]).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{o}");
        }
        let ok = ExperimentConfig::load(None, &["model={\"mode\":\"search\"}".into()]).unwrap();
        assert_eq!(ok.model, ModelSection::Search);
    }
}
