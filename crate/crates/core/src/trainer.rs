//! Curriculum training of the embedding network with Adam, feature noise,
//! validation-based early stopping and an abort rule for hopeless runs.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dcloss::{dc_loss, EmbeddingField, LossError, TargetField};
use crate::dsp::FeatureSeq;
use crate::model::{build, Model, ModelError, ModelSpec};
use crate::nncore::{AdamState, Graph, NnError, ParamStore, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One curriculum stage. `segment_frames = None` trains on whole utterances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub segment_frames: Option<usize>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stages: Vec<Stage>,
    pub noise_std: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub abort_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stages: vec![
                Stage { segment_frames: Some(100), epochs: 5 },
                Stage { segment_frames: Some(500), epochs: 5 },
                Stage { segment_frames: None, epochs: 10 },
            ],
            noise_std: 0.2,
            lr: 1e-3,
            batch_size: 8,
            patience: 5,
            abort_threshold: 0.17,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.stages.is_empty() {
            return bad("at least one curriculum stage is required");
        }
        if self.stages.iter().any(|s| s.segment_frames == Some(0)) {
            return bad("segment length must be positive");
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return bad("noise_std must be non-negative");
        }
        if self.abort_threshold.is_nan() || self.abort_threshold <= 0.0 {
            return bad("abort_threshold must be positive");
        }
        if self.lr.is_nan() || self.lr < 0.0 || self.batch_size == 0 {
            return bad("lr must be non-negative and batch_size positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Validation loss of the freshly initialized model.
    pub initial_val_loss: f64,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Curriculum stage of each epoch.
    pub epoch_stage: Vec<usize>,
    pub best_val_loss: f64,
    /// Loss handed to the search: `best_val_loss`, or the abort threshold
    /// for aborted runs.
    pub reported_loss: f64,
    pub stopped_early: bool,
    pub aborted: bool,
    pub steps: u64,
    pub wall_clock_s: f64,
}

impl TrainReport {
    /// Equality of everything except wall-clock time.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        let mut a = self.clone();
        a.wall_clock_s = other.wall_clock_s;
        a == *other
    }
}

/// Loss of one utterance (or segment) and, optionally, parameter gradients.
fn item_loss(
    model: &Model,
    features: &FeatureSeq,
    targets: &TargetField,
    want_grads: bool,
) -> Result<(f64, Option<Vec<Tensor>>), TrainError> {
    let mut g = Graph::new();
    let out = model.forward(&mut g, features)?;
    let v = EmbeddingField::from_tensor(g.value(out))?;
    let (loss, grad) = dc_loss(&v, targets)?;
    if !want_grads {
        return Ok((loss, None));
    }
    let seed = Tensor::new(g.value(out).shape().to_vec(), grad)?;
    let grads = g.backward(out, seed)?.param_grads(&model.params);
    Ok((loss, Some(grads)))
}

/// Mean loss over the dataset on clean features.
pub fn validate(model: &Model, data: &Dataset) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Config("validation set is empty".into()));
    }
    let mut total = 0.0;
    for u in &data.items {
        total += item_loss(model, &u.features, &u.targets, false)?.0;
    }
    Ok(total / data.len() as f64)
}

/// Trains a freshly built model (weights seeded by `cfg.seed`).
pub fn train(spec: &ModelSpec, train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainReport), TrainError> {
    let model = build(spec, cfg.seed);
    train_model(model, train_set, val_set, cfg)
}

/// Trains `model` in place of its current weights.
///
/// Within each stage, training stops once the validation loss has not
/// improved on the best so far for `patience` epochs; the best weights seen
/// so far are restored at every stage boundary and at the end.
pub fn train_model(
    mut model: Model,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| TrainError::Config(e.to_string()))?;
    let mut adam = AdamState::new(&model.params, cfg.lr);

    let initial = validate(&model, val_set)?;
    if !initial.is_finite() {
        return Err(TrainError::Diverged { epoch: 0 });
    }
    let mut best = initial;
    let mut best_params: ParamStore = model.params.clone();
    let mut report = TrainReport {
        initial_val_loss: initial,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        epoch_stage: Vec::new(),
        best_val_loss: initial,
        reported_loss: initial,
        stopped_early: false,
        aborted: false,
        steps: 0,
        wall_clock_s: 0.0,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for (si, stage) in cfg.stages.iter().enumerate() {
        let mut since_best = 0;
        let mut last_improved = false;
        for _ in 0..stage.epochs {
            let epoch = report.val_loss.len() + 1;
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let mut acc: Option<Vec<Tensor>> = None;
                for &i in batch {
                    let u = &train_set.items[i];
                    let (mut feats, targets) = match stage.segment_frames {
                        Some(len) if len < u.features.frames => {
                            let start = rng.random_range(0..=u.features.frames - len);
                            (u.features.segment(start, len), u.targets.segment(start, len))
                        }
                        _ => (u.features.clone(), u.targets.clone()),
                    };
                    if cfg.noise_std > 0.0 {
                        for x in feats.values.iter_mut() {
                            *x += noise.sample(&mut rng);
                        }
                    }
                    let (loss, grads) = item_loss(&model, &feats, &targets, true)?;
                    if !loss.is_finite() {
                        return Err(TrainError::Diverged { epoch });
                    }
                    epoch_loss += loss;
                    let grads = grads.expect("requested");
                    match acc.as_mut() {
                        None => acc = Some(grads),
                        Some(a) => a.iter_mut().zip(&grads).for_each(|(x, y)| x.add_assign(y)),
                    }
                }
                let mut grads = acc.expect("non-empty batch");
                let scale = 1.0 / batch.len() as f64;
                for g in grads.iter_mut() {
                    g.scale(scale);
                    if !g.is_finite() {
                        return Err(TrainError::Diverged { epoch });
                    }
                }
                adam.step(&mut model.params, &grads)?;
                report.steps += 1;
            }
            let val = validate(&model, val_set)?;
            if !val.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            report.train_loss.push(epoch_loss / train_set.len() as f64);
            report.val_loss.push(val);
            report.epoch_stage.push(si);
            last_improved = val < best;
            if last_improved {
                best = val;
                best_params = model.params.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
        model.params = best_params.clone();
        adam = AdamState::new(&model.params, cfg.lr);
        if si == 0 && best > cfg.abort_threshold && !last_improved {
            report.aborted = true;
            break;
        }
    }

    report.best_val_loss = best;
    report.reported_loss = if report.aborted { cfg.abort_threshold } else { best };
    report.wall_clock_s = started.elapsed().as_secs_f64();
    Ok((model, report))
}
