//! Aggregations over a trial ledger: the loss-ordered summary and
//! per-category averages of the best trials.

use serde::{Deserialize, Serialize};

use crate::hyperopt::{sorted_by_loss, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Cnn,
    Lstm,
}

/// Keep only trials with at least `min_fraction` of their parameters in
/// `branch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFilter {
    pub branch: Branch,
    pub min_fraction: f64,
}

impl BranchFilter {
    pub fn admits(&self, rec: &TrialRecord) -> bool {
        if self.min_fraction <= 0.0 {
            return true;
        }
        let Some(p) = rec.partition else { return false };
        if p.total == 0 {
            return false;
        }
        let share = match self.branch {
            Branch::Cnn => p.cnn_params,
            Branch::Lstm => p.lstm_params,
        };
        // exact integer comparison: share / total >= min_fraction
        share as f64 >= self.min_fraction * p.total as f64
    }
}

/// Categorical fields that can be grouped on, with their choices and the
/// branch whose share gates them.
pub const GROUP_FIELDS: [(&str, &[&str], Branch); 3] = [
    ("upsampling", &["bypass", "unpooling", "none"], Branch::Cnn),
    ("concat", &["broadcast", "flattening"], Branch::Cnn),
    ("lstm_direction", &["uni", "bi"], Branch::Lstm),
];

/// The branch filter applied to `field` by default (20 % of parameters).
pub fn default_filter(field: &str) -> Option<BranchFilter> {
    GROUP_FIELDS
        .iter()
        .find(|(f, _, _)| *f == field)
        .map(|&(_, _, branch)| BranchFilter { branch, min_fraction: 0.2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub field: String,
    pub value: String,
    /// Trials with this value that pass the filter.
    pub qualifying: usize,
    /// Trials averaged (at most `top_k`).
    pub used: usize,
    pub mean_loss: Option<f64>,
    /// Mean over the used trials that carry an SDR value.
    pub mean_sdr_improvement: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("unknown grouping field {0:?}")]
    UnknownField(String),
    #[error("ledger is empty")]
    EmptyLedger,
}

/// One row per value of `field`: the `top_k` lowest-loss trials that pass
/// `filter`, averaged. Values without qualifying trials give an empty row.
pub fn group_report(
    ledger: &[TrialRecord],
    field: &str,
    top_k: usize,
    filter: Option<BranchFilter>,
) -> Result<Vec<GroupRow>, ReportError> {
    if ledger.is_empty() {
        return Err(ReportError::EmptyLedger);
    }
    let (_, choices, _) = GROUP_FIELDS
        .iter()
        .find(|(f, _, _)| *f == field)
        .ok_or_else(|| ReportError::UnknownField(field.to_string()))?;
    let sorted = sorted_by_loss(ledger);
    Ok(choices
        .iter()
        .map(|&value| {
            let members: Vec<&TrialRecord> = sorted
                .iter()
                .filter(|r| r.params.get(field).and_then(|v| v.as_str()) == Some(value))
                .filter(|r| filter.is_none_or(|f| f.admits(r)))
                .collect();
            let used: Vec<&TrialRecord> = members.iter().take(top_k).copied().collect();
            let mean_loss = (!used.is_empty()).then(|| used.iter().map(|r| r.loss).sum::<f64>() / used.len() as f64);
            let sdrs: Vec<f64> = used.iter().filter_map(|r| r.sdr_improvement).collect();
            let mean_sdr_improvement = (!sdrs.is_empty()).then(|| sdrs.iter().sum::<f64>() / sdrs.len() as f64);
            GroupRow {
                field: field.to_string(),
                value: value.to_string(),
                qualifying: members.len(),
                used: used.len(),
                mean_loss,
                mean_sdr_improvement,
            }
        })
        .collect())
}

/// One ledger entry flattened for the loss-ordered summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial: usize,
    pub loss: f64,
    pub sdr_improvement: Option<f64>,
    pub aborted: bool,
    pub cnn_params: Option<u64>,
    pub lstm_params: Option<u64>,
    pub fc_params: Option<u64>,
    pub total_params: Option<u64>,
    pub upsampling: Option<String>,
    pub concat: Option<String>,
    pub lstm_direction: Option<String>,
}

/// Ledger rows ordered by non-decreasing loss.
pub fn summary_rows(ledger: &[TrialRecord]) -> Vec<ReportRow> {
    let cat = |r: &TrialRecord, f: &str| r.params.get(f).and_then(|v| v.as_str()).map(str::to_string);
    sorted_by_loss(ledger)
        .iter()
        .map(|r| ReportRow {
            trial: r.trial,
            loss: r.loss,
            sdr_improvement: r.sdr_improvement,
            aborted: r.aborted,
            cnn_params: r.partition.map(|p| p.cnn_params),
            lstm_params: r.partition.map(|p| p.lstm_params),
            fc_params: r.partition.map(|p| p.fc_params),
            total_params: r.partition.map(|p| p.total),
            upsampling: cat(r, "upsampling"),
            concat: cat(r, "concat"),
            lstm_direction: cat(r, "lstm_direction"),
        })
        .collect()
}
