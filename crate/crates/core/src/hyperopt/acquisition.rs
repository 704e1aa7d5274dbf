use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::gp::GpState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    ExpectedImprovement,
    ProbabilityOfImprovement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    /// Exploration margin ξ subtracted from the incumbent.
    pub xi: f64,
    /// Random starts of the acquisition maximizer.
    pub restarts: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            kind: AcquisitionKind::ExpectedImprovement,
            xi: 0.01,
            restarts: 10,
        }
    }
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Acquisition value for a Gaussian prediction `(mu, sigma)` when
/// minimizing, with partial derivatives `(∂/∂μ, ∂/∂σ)`.
pub fn acquisition_from_moments(mu: f64, sigma: f64, best_y: f64, cfg: &AcquisitionConfig) -> (f64, f64, f64) {
    let imp = best_y - cfg.xi - mu;
    if sigma <= 0.0 {
        return match cfg.kind {
            AcquisitionKind::ExpectedImprovement => (imp.max(0.0), if imp > 0.0 { -1.0 } else { 0.0 }, 0.0),
            AcquisitionKind::ProbabilityOfImprovement => (if imp > 0.0 { 1.0 } else { 0.0 }, 0.0, 0.0),
        };
    }
    let z = imp / sigma;
    let (cdf, pdf) = (norm_cdf(z), norm_pdf(z));
    match cfg.kind {
        AcquisitionKind::ExpectedImprovement => (imp * cdf + sigma * pdf, -cdf, pdf),
        AcquisitionKind::ProbabilityOfImprovement => (cdf, -pdf / sigma, -z * pdf / sigma),
    }
}

/// Acquisition of the surrogate at `x`.
pub fn acquisition(gp: &GpState, x: &[f64], best_y: f64, cfg: &AcquisitionConfig) -> f64 {
    let (mu, sigma) = gp.predict(x);
    acquisition_from_moments(mu, sigma, best_y, cfg).0
}

/// Acquisition value and gradient with respect to `x`.
pub fn acquisition_with_grad(gp: &GpState, x: &[f64], best_y: f64, cfg: &AcquisitionConfig) -> (f64, Vec<f64>) {
    let (mu, sigma, dmu, dsigma) = gp.predict_with_grad(x);
    let (a, da_dmu, da_dsigma) = acquisition_from_moments(mu, sigma, best_y, cfg);
    let grad = dmu.iter().zip(&dsigma).map(|(m, s)| da_dmu * m + da_dsigma * s).collect();
    (a, grad)
}
