use std::path::PathBuf;

use dcsep::dataset::DataError;
use dcsep::dcloss::LossError;
use dcsep::dsp::DspError;
use dcsep::hyperopt::HpoError;
use dcsep::model::ModelError;
use dcsep::nncore::NnError;
use dcsep::report::ReportError;
use dcsep::separator::SepError;
use dcsep::trainer::TrainError;

/// Command failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact: {}", .0.display())]
    Missing(PathBuf),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<DspError> for CliError {
    fn from(e: DspError) -> Self {
        match e {
            DspError::Config(_) => CliError::Config(e.to_string()),
            DspError::InputTooShort { .. } | DspError::EmptyCorpus => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Config(_) => CliError::Config(e.to_string()),
            LossError::Shape(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Missing(p) => CliError::Missing(p),
            DataError::Dsp(e) => e.into(),
            DataError::Loss(e) => e.into(),
            DataError::Empty(_) => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Range(_) | ModelError::InvalidConfig(_) => CliError::Config(e.to_string()),
            ModelError::Nn(e) => e.into(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Numerical(e.to_string()),
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::Model(e) => e.into(),
            TrainError::Loss(e) => e.into(),
            TrainError::Nn(e) => e.into(),
        }
    }
}

impl From<SepError> for CliError {
    fn from(e: SepError) -> Self {
        match e {
            SepError::TooFewPoints { .. } | SepError::UndefinedReference => CliError::Numerical(e.to_string()),
            SepError::Dsp(e) => e.into(),
            SepError::Model(e) => e.into(),
            SepError::Shape(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<HpoError> for CliError {
    fn from(e: HpoError) -> Self {
        match e {
            HpoError::Numerical(_) => CliError::Numerical(e.to_string()),
            HpoError::Range(_) | HpoError::Config(_) | HpoError::Feasibility(_) => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Config(e.to_string())
    }
}
