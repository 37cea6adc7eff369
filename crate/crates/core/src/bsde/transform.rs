//! Exact transforms between certainty equivalents and exponential utilities.

use crate::error::{Error, Result};

use super::forward::YPaths;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    /// Money to utility: `y -> -exp(-R_A y)`.
    ToUtility,
    /// Utility to money: `u -> -ln(-u) / R_A`; requires `u < 0`.
    ToCe,
}

pub fn ce_to_utility(y: f64, risk_aversion: f64) -> f64 {
    -(-risk_aversion * y).exp()
}

pub fn utility_to_ce(u: f64, risk_aversion: f64) -> Result<f64> {
    if u >= 0.0 {
        return Err(Error::Domain(format!(
            "utility_to_ce needs a strictly negative input, got {u}"
        )));
    }
    Ok(-(-u).ln() / risk_aversion)
}

/// Componentwise transform of a path array with per-agent risk aversions.
pub fn transform_paths(
    paths: &YPaths,
    risk_aversion: &[f64],
    direction: TransformDirection,
) -> Result<YPaths> {
    let mut out = paths.clone();
    for (idx, v) in out.values.iter_mut().enumerate() {
        let ra = risk_aversion[idx % paths.n_agents];
        *v = match direction {
            TransformDirection::ToUtility => ce_to_utility(*v, ra),
            TransformDirection::ToCe => utility_to_ce(*v, ra)?,
        };
    }
    Ok(out)
}
