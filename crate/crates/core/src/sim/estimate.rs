use crate::error::{Error, Result};
use crate::num::mean_stderr;
use crate::sim::bundle::{DensityPaths, PathBundle, PathView};

/// Monte Carlo mean and standard error of a path functional.
///
/// With `reweight` supplied the estimator is the importance-sampling form
/// `E[M_T f]`, turning base-measure paths into controlled-measure
/// expectations. The reduction is pairwise and independent of worker count.
pub fn estimate_expectation(
    bundle: &PathBundle,
    functional: &(dyn Fn(PathView) -> f64 + Sync),
    reweight: Option<&DensityPaths>,
) -> Result<(f64, f64)> {
    if bundle.n_paths == 0 {
        return Err(Error::Simulation("cannot estimate from zero paths".into()));
    }
    if let Some(d) = reweight {
        if d.n_paths != bundle.n_paths || d.n_nodes != bundle.n_nodes() {
            return Err(Error::Simulation("density paths do not match the bundle".into()));
        }
    }
    let mut values = Vec::with_capacity(bundle.n_paths);
    for p in 0..bundle.n_paths {
        let f = functional(bundle.path(p));
        if !f.is_finite() {
            return Err(Error::Simulation(format!("functional not finite on path {p}")));
        }
        let w = reweight.map(|d| d.terminal(p)).unwrap_or(1.0);
        values.push(w * f);
    }
    Ok(mean_stderr(&values))
}
