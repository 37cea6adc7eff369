//! Path simulation under the base or a controlled measure, change-of-measure
//! density paths, and reweighted Monte Carlo estimators.

mod bundle;
mod estimate;
mod girsanov;
mod grid;
mod rng;
mod simulate;

pub use bundle::{DensityPaths, JumpEvent, PathBundle, PathView, SimMeasure};
pub use estimate::estimate_expectation;
pub use girsanov::girsanov_density;
pub use grid::TimeGrid;
pub use rng::path_rng;
pub use simulate::{simulate_base, simulate_paths, simulate_paths_with, SimOptions};

/// Feedback action policy `(t, x) -> a`.
///
/// Implementations must be deterministic; simulation reproducibility relies
/// on it.
pub trait Policy: Sync {
    fn action_into(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn action(&self, t: f64, x: &[f64], dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.action_into(t, x, &mut out);
        out
    }
}

/// Constant joint action.
#[derive(Debug, Clone)]
pub struct ConstantPolicy(pub Vec<f64>);

impl Policy for ConstantPolicy {
    fn action_into(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Policy defined by a closure.
pub struct FnPolicy<F: Fn(f64, &[f64], &mut [f64]) + Sync>(pub F);

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> Policy for FnPolicy<F> {
    fn action_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.0)(t, x, out)
    }
}

/// A base policy with one agent's coordinates pinned to a constant; used by
/// the incentive-compatibility harness.
pub struct DeviatedPolicy<'a> {
    pub base: &'a dyn Policy,
    pub agent_range: std::ops::Range<usize>,
    pub action: Vec<f64>,
}

impl Policy for DeviatedPolicy<'_> {
    fn action_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.base.action_into(t, x, out);
        out[self.agent_range.clone()].copy_from_slice(&self.action);
    }
}
