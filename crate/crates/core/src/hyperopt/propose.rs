use rand::Rng;

use super::acquisition::{acquisition, acquisition_with_grad, AcquisitionConfig};
use super::gp::GpState;
use super::lbfgs::{maximize, LbfgsOptions};
use super::space::{ParamSpace, Value};
use super::HpoError;

/// Random draws tried when every optimized candidate is infeasible.
pub const FALLBACK_DRAWS: usize = 10_000;
/// Feasible fallback draws compared by acquisition before picking one.
const FALLBACK_POOL: usize = 64;

/// Draws uniformly until `feasible` accepts, at most [`FALLBACK_DRAWS`] times.
pub fn sample_feasible<R: Rng>(space: &ParamSpace, feasible: &dyn Fn(&[Value]) -> bool, rng: &mut R) -> Result<Vec<Value>, HpoError> {
    for _ in 0..FALLBACK_DRAWS {
        let v = space.sample(rng);
        if feasible(&v) {
            return Ok(v);
        }
    }
    Err(HpoError::Feasibility(format!("no feasible configuration in {FALLBACK_DRAWS} random draws")))
}

/// Next configuration to evaluate.
///
/// The acquisition is maximized with L-BFGS over the unit cube from
/// `cfg.restarts` random starts plus the best observed point. Candidates are
/// decoded in order of decreasing acquisition and the first feasible one is
/// returned. If none is feasible, up to [`FALLBACK_DRAWS`] random
/// configurations are drawn and the feasible one with the highest
/// acquisition among the first few found is returned.
pub fn propose<R: Rng>(
    gp: &GpState,
    space: &ParamSpace,
    feasible: &dyn Fn(&[Value]) -> bool,
    cfg: &AcquisitionConfig,
    rng: &mut R,
) -> Result<Vec<Value>, HpoError> {
    let d = space.encoded_len();
    if gp.dim() != d {
        return Err(HpoError::Config(format!("surrogate has {} inputs, space encodes {d}", gp.dim())));
    }
    let (best_i, best_y) = gp
        .targets()
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &y)| if y < acc.1 { (i, y) } else { acc });
    let lo = vec![0.0; d];
    let hi = vec![1.0; d];
    let opts = LbfgsOptions {
        max_iter: 100,
        f_tol: 1e-12,
        ..LbfgsOptions::default()
    };
    let mut starts: Vec<Vec<f64>> = (0..cfg.restarts.max(1))
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    starts.push(gp.inputs()[best_i].clone());

    let mut candidates: Vec<(f64, Vec<f64>)> = starts
        .iter()
        .map(|x0| {
            let r = maximize(|x| acquisition_with_grad(gp, x, best_y, cfg), x0, &lo, &hi, &opts);
            (r.value, r.x)
        })
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, x) in &candidates {
        let v = space.decode(x)?;
        if feasible(&v) {
            return Ok(v);
        }
    }

    let mut pool = Vec::new();
    for _ in 0..FALLBACK_DRAWS {
        let v = space.sample(rng);
        if feasible(&v) {
            pool.push(v);
            if pool.len() == FALLBACK_POOL {
                break;
            }
        }
    }
    let scored = pool
        .into_iter()
        .map(|v| {
            let a = acquisition(gp, &space.encode(&v)?, best_y, cfg);
            Ok((a, v))
        })
        .collect::<Result<Vec<_>, HpoError>>()?;
    scored
        .into_iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, v)| v)
        .ok_or_else(|| HpoError::Feasibility(format!("no feasible configuration in {FALLBACK_DRAWS} random draws")))
}
