//! Command implementations behind the `dcsep` binary.

mod commands;
mod config;
mod error;

pub use commands::{
    cmd_evaluate, cmd_hpo, cmd_report, cmd_separate, cmd_synth, cmd_train, load_model, EvalRow, EvalSummary,
    ModelArtifact, CHECKPOINT_BLOB, CHECKPOINT_MANIFEST, EVAL_CSV, HPO_SUMMARY_CSV, MODEL_FILE, TRAIN_REPORT_FILE,
};
pub use config::{
    apply_override, desk_model, DataSection, EvalSection, ExperimentConfig, HpoSection, ModelSection, ReportSection,
};
pub use error::CliError;
