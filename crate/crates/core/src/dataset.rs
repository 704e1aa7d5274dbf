//! Corpus persistence and per-utterance preparation (STFT, normalized
//! features and dominant-speaker targets).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dcloss::{make_targets, LossError, TargetField};
use crate::dsp::{
    fit_normalizer, log_features, read_wav, stft, write_wav, Corpus, DspError, FeatureSeq, Mixture, Normalizer,
    Spectrogram, SynthConfig, Waveform,
};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("missing file {0}")]
    Missing(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Empty(String),
}

/// One mixture ready for training or separation.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub mixture: Waveform,
    pub sources: Vec<Waveform>,
    pub spectrogram: Spectrogram,
    pub features: FeatureSeq,
    pub targets: TargetField,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub items: Vec<Utterance>,
}

impl Dataset {
    /// Analyses every mixture and normalizes its features with `norm`.
    pub fn prepare(mixes: &[Mixture], norm: &Normalizer) -> Result<Self, DataError> {
        let items = mixes
            .iter()
            .map(|m| {
                let spectrogram = stft(&m.mixture)?;
                let features = log_features(&spectrogram, norm)?;
                let sources = m.sources.iter().map(stft).collect::<Result<Vec<_>, _>>()?;
                let targets = make_targets(&sources)?;
                Ok(Utterance {
                    id: m.id.clone(),
                    mixture: m.mixture.clone(),
                    sources: m.sources.clone(),
                    spectrogram,
                    features,
                    targets,
                })
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Fits the feature normalizer on the mixtures of a (training) split.
pub fn fit_mixture_normalizer(mixes: &[Mixture]) -> Result<Normalizer, DataError> {
    if mixes.is_empty() {
        return Err(DataError::Empty("cannot fit a normalizer on an empty split".into()));
    }
    let specs = mixes.iter().map(|m| stft(&m.mixture)).collect::<Result<Vec<_>, _>>()?;
    Ok(fit_normalizer(specs.iter())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub split: String,
    pub id: String,
    pub mixture: PathBuf,
    pub sources: Vec<PathBuf>,
    pub samples: usize,
}

/// Index of a corpus written by [`write_corpus`]. Paths are relative to the
/// corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub items: Vec<ManifestItem>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes every mixture and its sources as WAV files plus `manifest.json`.
pub fn write_corpus(dir: &Path, corpus: &Corpus, cfg: &SynthConfig, seed: u64) -> Result<CorpusManifest, DataError> {
    let mut items = Vec::new();
    for (split, mixes) in corpus.splits() {
        std::fs::create_dir_all(dir.join(split))?;
        for m in mixes {
            let mixture = PathBuf::from(split).join(format!("{}_mix.wav", m.id));
            write_wav(&dir.join(&mixture), &m.mixture)?;
            let mut sources = Vec::with_capacity(m.sources.len());
            for (s, w) in m.sources.iter().enumerate() {
                let p = PathBuf::from(split).join(format!("{}_s{}.wav", m.id, s + 1));
                write_wav(&dir.join(&p), w)?;
                sources.push(p);
            }
            items.push(ManifestItem {
                split: split.to_string(),
                id: m.id.clone(),
                mixture,
                sources,
                samples: m.mixture.len(),
            });
        }
    }
    let manifest = CorpusManifest {
        seed,
        config: cfg.clone(),
        items,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn read_existing(path: &Path) -> Result<Waveform, DataError> {
    if !path.exists() {
        return Err(DataError::Missing(path.to_path_buf()));
    }
    Ok(read_wav(path)?)
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest, DataError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(DataError::Missing(path));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Reads a corpus written by [`write_corpus`].
pub fn load_corpus(dir: &Path) -> Result<Corpus, DataError> {
    let manifest = read_manifest(dir)?;
    let mut corpus = Corpus::default();
    for item in &manifest.items {
        let m = Mixture {
            id: item.id.clone(),
            mixture: read_existing(&dir.join(&item.mixture))?,
            sources: item
                .sources
                .iter()
                .map(|p| read_existing(&dir.join(p)))
                .collect::<Result<_, _>>()?,
        };
        match item.split.as_str() {
            "train" => corpus.train.push(m),
            "val" => corpus.val.push(m),
            "test" => corpus.test.push(m),
            other => return Err(DataError::Empty(format!("unknown split {other:?} in manifest"))),
        }
    }
    Ok(corpus)
}
