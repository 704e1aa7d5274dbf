use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dcsep::dataset::{fit_mixture_normalizer, load_corpus, write_corpus, CorpusManifest, Dataset};
use dcsep::dsp::{read_wav, synth_corpus, write_wav, Corpus, Mixture, Normalizer, FREQ_BINS};
use dcsep::hyperopt::{
    bo_loop, budget_feasibility, limited_architecture_space, read_ledger, values_to_hp, BoConfig, Evaluation,
    TrialRecord,
};
use dcsep::model::{build, count_params, resolve, HyperParams, Model, ModelSpec, DEFAULT_EMBED_DIM, SPEAKERS};
use dcsep::nncore::ParamStore;
use dcsep::report::{default_filter, group_report, summary_rows, BranchFilter, GroupRow, ReportRow};
use dcsep::separator::{score_separation, separate};
use dcsep::trainer::{train_model, TrainReport};

use crate::config::{ExperimentConfig, ModelSection};
use crate::CliError;

pub const CHECKPOINT_BLOB: &str = "checkpoint.bin";
pub const CHECKPOINT_MANIFEST: &str = "checkpoint.json";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const EVAL_CSV: &str = "evaluation.csv";
pub const HPO_SUMMARY_CSV: &str = "hpo_summary.csv";

/// Everything besides the weights needed to rebuild a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub hyperparams: HyperParams,
    pub embed_dim: usize,
    pub normalizer: Normalizer,
    pub total_params: u64,
}

/// One row of the per-utterance evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub utt_id: String,
    pub sdr1: f64,
    pub sdr2: f64,
    pub baseline: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub mean_improvement: f64,
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    if !path.exists() {
        return Err(CliError::Missing(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn split<'a>(corpus: &'a Corpus, name: &str) -> Result<&'a [Mixture], CliError> {
    corpus
        .splits()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, m)| m)
        .ok_or_else(|| CliError::Config(format!("unknown split {name:?}")))
}

fn fixed_model(cfg: &ExperimentConfig) -> Result<(HyperParams, usize), CliError> {
    match &cfg.model {
        ModelSection::Fixed { hyperparams, embed_dim } => Ok((hyperparams.clone(), *embed_dim)),
        ModelSection::Search => Err(CliError::Config("this command needs model.mode = \"fixed\"".into())),
    }
}

/// Generates the corpus into `data.dir`, replacing any previous one.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<CorpusManifest, CliError> {
    let corpus = synth_corpus(&cfg.data.synth, cfg.seed)?;
    let dir = &cfg.data.dir;
    for (name, _) in corpus.splits() {
        let d = dir.join(name);
        if d.exists() {
            fs::remove_dir_all(&d)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(write_corpus(dir, &corpus, &cfg.data.synth, cfg.seed)?)
}

/// Trains the fixed model on the train split, early-stopping on val, and
/// writes the checkpoint, model description and training report.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport, CliError> {
    let (hp, embed_dim) = fixed_model(cfg)?;
    let spec = resolve(&hp, FREQ_BINS, embed_dim, SPEAKERS)?;
    let corpus = load_corpus(&cfg.data.dir)?;
    let norm = fit_mixture_normalizer(&corpus.train)?;
    let train_set = Dataset::prepare(&corpus.train, &norm)?;
    let val_set = Dataset::prepare(&corpus.val, &norm)?;
    let mut tcfg = cfg.train.clone();
    tcfg.seed = cfg.seed;
    let (model, report) = train_model(build(&spec, cfg.seed), &train_set, &val_set, &tcfg)?;

    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    save_json(&out.join("config.json"), cfg)?;
    model.params.save(&out.join(CHECKPOINT_BLOB), &out.join(CHECKPOINT_MANIFEST))?;
    let artifact = ModelArtifact {
        hyperparams: hp,
        embed_dim,
        normalizer: norm,
        total_params: count_params(&spec).total,
    };
    save_json(&out.join(MODEL_FILE), &artifact)?;
    save_json(&out.join(TRAIN_REPORT_FILE), &report)?;
    Ok(report)
}

/// Rebuilds the trained model from `dir`.
pub fn load_model(dir: &Path) -> Result<(Model, ModelArtifact), CliError> {
    let artifact: ModelArtifact = load_json(&dir.join(MODEL_FILE))?;
    let (blob, manifest) = (dir.join(CHECKPOINT_BLOB), dir.join(CHECKPOINT_MANIFEST));
    for p in [&blob, &manifest] {
        if !p.exists() {
            return Err(CliError::Missing(p.clone()));
        }
    }
    let spec: ModelSpec = resolve(&artifact.hyperparams, FREQ_BINS, artifact.embed_dim, SPEAKERS)?;
    let model = Model::from_params(spec, ParamStore::load(&blob, &manifest)?)?;
    Ok((model, artifact))
}

fn estimate_path(dir: &Path, id: &str, k: usize) -> PathBuf {
    dir.join(format!("{id}_est{}.wav", k + 1))
}

/// Separates every mixture of `eval.split` with the trained model and writes
/// `<id>_est1.wav`, `<id>_est2.wav` into the estimates directory.
pub fn cmd_separate(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let (model, artifact) = load_model(&cfg.output_dir)?;
    let corpus = load_corpus(&cfg.data.dir)?;
    let data = Dataset::prepare(split(&corpus, &cfg.eval.split)?, &artifact.normalizer)?;
    let dir = cfg.estimates_dir();
    fs::create_dir_all(&dir)?;
    for u in &data.items {
        for (k, w) in separate(&model, u, cfg.seed)?.iter().enumerate() {
            write_wav(&estimate_path(&dir, &u.id, k), w)?;
        }
    }
    Ok(dir)
}

/// Scores the estimates of `eval.split` against the references and writes
/// the per-utterance CSV.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvalSummary, CliError> {
    let corpus = load_corpus(&cfg.data.dir)?;
    let mixes = split(&corpus, &cfg.eval.split)?;
    if mixes.is_empty() {
        return Err(CliError::Config(format!("split {:?} is empty", cfg.eval.split)));
    }
    let dir = cfg.estimates_dir();
    let mut rows = Vec::with_capacity(mixes.len());
    for m in mixes {
        let estimates = (0..m.sources.len())
            .map(|k| {
                let p = estimate_path(&dir, &m.id, k);
                if !p.exists() {
                    return Err(CliError::Missing(p));
                }
                Ok(read_wav(&p)?)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let s = score_separation(&m.sources, &estimates, &m.mixture)?;
        let baseline = s.sdr_mixture_baseline.iter().sum::<f64>() / s.sdr_mixture_baseline.len() as f64;
        rows.push(EvalRow {
            utt_id: m.id.clone(),
            sdr1: s.sdr_per_source[0],
            sdr2: s.sdr_per_source.get(1).copied().unwrap_or(f64::NAN),
            baseline,
            improvement: s.sdr_improvement,
        });
    }
    fs::create_dir_all(&cfg.output_dir)?;
    write_csv(&cfg.output_dir.join(EVAL_CSV), &rows)?;
    let mean_improvement = rows.iter().map(|r| r.improvement).sum::<f64>() / rows.len() as f64;
    Ok(EvalSummary { rows, mean_improvement })
}

fn mean_sdr_improvement(model: &Model, data: &Dataset, seed: u64) -> Result<f64, CliError> {
    let mut total = 0.0;
    for u in &data.items {
        let est = separate(model, u, seed)?;
        total += score_separation(&u.sources, &est, &u.mixture)?.sdr_improvement;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Runs the architecture search, appending to the ledger, and writes the
/// loss-ordered summary.
pub fn cmd_hpo(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>, CliError> {
    if cfg.model != ModelSection::Search {
        return Err(CliError::Config("hpo needs model.mode = \"search\"".into()));
    }
    let corpus = load_corpus(&cfg.data.dir)?;
    let norm = fit_mixture_normalizer(&corpus.train)?;
    let train_set = Dataset::prepare(&corpus.train, &norm)?;
    let val_set = Dataset::prepare(&corpus.val, &norm)?;
    let space = limited_architecture_space(&cfg.hpo.limits);
    let feasible = budget_feasibility(cfg.hpo.budget);
    let bo = BoConfig {
        seed: cfg.seed,
        ..cfg.hpo.bo.clone()
    };
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    save_json(&out.join("config.json"), cfg)?;

    let objective = |values: &[dcsep::hyperopt::Value], seed: u64| -> Result<Evaluation, String> {
        let hp = values_to_hp(values);
        let spec = resolve(&hp, FREQ_BINS, DEFAULT_EMBED_DIM, SPEAKERS).map_err(|e| e.to_string())?;
        let mut tcfg = cfg.train.clone();
        tcfg.seed = seed;
        let (model, report) = train_model(build(&spec, seed), &train_set, &val_set, &tcfg).map_err(|e| e.to_string())?;
        let sdr = mean_sdr_improvement(&model, &val_set, seed).map_err(|e| e.to_string())?;
        Ok(Evaluation {
            loss: report.reported_loss,
            sdr_improvement: Some(sdr),
            partition: Some(count_params(&spec)),
            aborted: report.aborted,
        })
    };
    let ledger = bo_loop(&space, objective, &feasible, &bo, Some(&cfg.ledger_path()))?;
    let threshold = cfg.train.abort_threshold;
    let rows: Vec<ReportRow> = summary_rows(&ledger)
        .into_iter()
        .map(|r| ReportRow {
            loss: r.loss.min(threshold),
            ..r
        })
        .collect();
    write_csv(&out.join(HPO_SUMMARY_CSV), &rows)?;
    Ok(ledger)
}

/// Writes `report_<field>.csv` for every configured grouping field.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Vec<Vec<GroupRow>>, CliError> {
    let path = cfg.ledger_path();
    if !path.exists() {
        return Err(CliError::Missing(path));
    }
    let ledger = read_ledger(&path)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut out = Vec::new();
    for field in &cfg.report.group_by {
        let filter = match (default_filter(field), cfg.report.min_fraction) {
            (Some(f), Some(min_fraction)) => Some(BranchFilter { min_fraction, ..f }),
            (f, _) => f,
        };
        let rows = group_report(&ledger, field, cfg.report.top_k, filter)?;
        write_csv(&cfg.output_dir.join(format!("report_{field}.csv")), &rows)?;
        out.push(rows);
    }
    Ok(out)
}
