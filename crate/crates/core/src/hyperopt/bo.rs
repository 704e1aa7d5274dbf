use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::AcquisitionConfig;
use super::gp::gp_fit;
use super::propose::{propose, sample_feasible};
use super::space::{ParamSpace, Value};
use super::HpoError;
use crate::model::ParamPartition;

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Raw configuration; inactive fields are null.
    pub params: serde_json::Value,
    pub encoded: Vec<f64>,
    /// Validation loss, clipped at the abort threshold for aborted trials.
    pub loss: f64,
    pub sdr_improvement: Option<f64>,
    pub partition: Option<ParamPartition>,
    pub aborted: bool,
    pub seed: u64,
    pub started_at: f64,
    pub finished_at: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TrialRecord {
    /// Equality ignoring timestamps.
    pub fn same_outcome(&self, other: &TrialRecord) -> bool {
        let mut a = self.clone();
        a.started_at = other.started_at;
        a.finished_at = other.finished_at;
        a == *other
    }
}

/// What the objective reports for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub sdr_improvement: Option<f64>,
    pub partition: Option<ParamPartition>,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub n_init: usize,
    pub n_iter: usize,
    pub seed: u64,
    pub acquisition: AcquisitionConfig,
    pub gp_restarts: usize,
    /// Loss recorded for trials whose objective failed.
    pub failure_loss: f64,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            n_init: 10,
            n_iter: 20,
            seed: 0,
            acquisition: AcquisitionConfig::default(),
            gp_restarts: 8,
            failure_loss: 0.17,
        }
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Independent RNG for trial `index`, so resumed runs replay exactly.
fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

pub fn read_ledger(path: &Path) -> Result<Vec<TrialRecord>, HpoError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn append_record(path: &Path, rec: &TrialRecord) -> Result<(), HpoError> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(rec)?)?;
    Ok(())
}

/// Records ordered by increasing loss (ties by trial index).
pub fn sorted_by_loss(ledger: &[TrialRecord]) -> Vec<TrialRecord> {
    let mut v = ledger.to_vec();
    v.sort_by(|a, b| a.loss.total_cmp(&b.loss).then(a.trial.cmp(&b.trial)));
    v
}

/// Sequential model-based optimization.
///
/// The first `n_init` trials are random feasible configurations; every later
/// trial fits the surrogate to all observations and evaluates the proposal.
/// With `ledger_path`, existing records are loaded first and new ones are
/// appended, so an interrupted or extended run continues where it stopped.
/// Objective errors and non-finite losses are recorded as aborted trials at
/// `cfg.failure_loss`.
pub fn bo_loop<F>(
    space: &ParamSpace,
    mut objective: F,
    feasible: &dyn Fn(&[Value]) -> bool,
    cfg: &BoConfig,
    ledger_path: Option<&Path>,
) -> Result<Vec<TrialRecord>, HpoError>
where
    F: FnMut(&[Value], u64) -> Result<Evaluation, String>,
{
    if cfg.n_init < 2 {
        return Err(HpoError::Config("n_init must be at least 2".into()));
    }
    let mut ledger = match ledger_path {
        Some(p) if p.exists() => read_ledger(p)?,
        _ => Vec::new(),
    };
    let total = cfg.n_init + cfg.n_iter;
    while ledger.len() < total {
        let index = ledger.len();
        let mut rng = trial_rng(cfg.seed, index);
        let trial_seed = rng.next_u64();
        let values = if index < cfg.n_init {
            sample_feasible(space, feasible, &mut rng)?
        } else {
            let x: Vec<Vec<f64>> = ledger.iter().map(|r| r.encoded.clone()).collect();
            let y: Vec<f64> = ledger.iter().map(|r| r.loss).collect();
            let gp = gp_fit(&x, &y, cfg.gp_restarts, &mut rng)?;
            propose(&gp, space, feasible, &cfg.acquisition, &mut rng)?
        };
        let encoded = space.encode(&values)?;
        let started_at = now();
        let (eval, note) = match objective(&values, trial_seed) {
            Ok(e) if e.loss.is_finite() => (e, None),
            Ok(e) => (
                Evaluation { loss: cfg.failure_loss, aborted: true, ..e },
                Some("non-finite loss".to_string()),
            ),
            Err(msg) => (
                Evaluation {
                    loss: cfg.failure_loss,
                    sdr_improvement: None,
                    partition: None,
                    aborted: true,
                },
                Some(msg),
            ),
        };
        let rec = TrialRecord {
            trial: index,
            params: space.to_json(&values),
            encoded,
            loss: eval.loss,
            sdr_improvement: eval.sdr_improvement,
            partition: eval.partition,
            aborted: eval.aborted,
            seed: trial_seed,
            started_at,
            finished_at: now(),
            note,
        };
        if let Some(p) = ledger_path {
            append_record(p, &rec)?;
        }
        ledger.push(rec);
    }
    Ok(ledger)
}
