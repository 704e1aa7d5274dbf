//! Bayesian optimization over mixed search spaces: unit-cube encoding,
//! Gaussian-process surrogate, expected-improvement / probability-of-
//! improvement acquisition maximized by bounded L-BFGS, budget-constrained
//! proposals and the sequential trial loop with a JSON-lines ledger.

mod acquisition;
mod architecture;
mod bo;
mod gp;
mod lbfgs;
mod propose;
mod space;

pub use acquisition::{
    acquisition, acquisition_from_moments, acquisition_with_grad, norm_cdf, norm_pdf, AcquisitionConfig,
    AcquisitionKind,
};
pub use architecture::{
    architecture_space, budget_feasibility, decode_hp, encode_hp, hp_to_values, limited_architecture_space, partition,
    values_to_hp, Budget, SpaceLimits,
};
pub use bo::{append_record, bo_loop, read_ledger, sorted_by_loss, BoConfig, Evaluation, TrialRecord};
pub use gp::{gp_fit, matern52, GpState, KernelParams};
pub use lbfgs::{maximize, LbfgsOptions, LbfgsResult};
pub use propose::{propose, sample_feasible, FALLBACK_DRAWS};
pub use space::{Dimension, ParamSpace, Value};

#[derive(Debug, thiserror::Error)]
pub enum HpoError {
    #[error("value out of range: {0}")]
    Range(String),
    #[error("no feasible configuration: {0}")]
    Feasibility(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
