use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sim::bundle::{DensityPaths, PathBundle, SimMeasure};
use crate::sim::Policy;

/// Density paths of the controlled measure relative to the base measure,
/// evaluated along base-measure paths.
///
/// Discrete stochastic exponential: per step the factor
/// `exp(b . dW - |b|^2 dt / 2)` for the Brownian part, a factor
/// `lambda(t, X, a, e)` at every realized jump, and the compensator
/// correction `exp(-sum_atoms (lambda - 1) w dt)`.
pub fn girsanov_density(
    model: &ModelSpec,
    bundle: &PathBundle,
    policy: &dyn Policy,
) -> Result<DensityPaths> {
    if bundle.measure != SimMeasure::Base {
        return Err(Error::Simulation(
            "girsanov_density expects a base-measure bundle; controlled bundles already carry their measure".into(),
        ));
    }
    let steps = bundle.grid.steps;
    let n_nodes = bundle.n_nodes();
    let dt = bundle.grid.dt();
    let a_dim = model.actions.dim();

    let rows: Vec<Result<Vec<f64>>> = (0..bundle.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut row = vec![1.0; n_nodes];
            let mut action = vec![0.0; a_dim];
            let mut b = vec![0.0; model.noise_dim];
            let path = bundle.path(p);
            let mut m = 1.0f64;
            for k in 0..steps {
                let t = bundle.grid.node(k);
                let x = path.state(k);
                policy.action_into(t, x, &mut action);

                model.drift_loading_into(t, x, &action, &mut b)?;
                let dw = path.increment(k);
                let mut log_update = 0.0;
                let mut b_sq = 0.0;
                for c in 0..model.noise_dim {
                    log_update += b[c] * dw[c];
                    b_sq += b[c] * b[c];
                }
                log_update -= 0.5 * b_sq * dt;

                let mut compensator = 0.0;
                for i in 0..model.n_agents {
                    for (j, atom) in model.jumps[i].atoms.iter().enumerate() {
                        let lambda = model.intensity(i, t, x, &action, atom.mark)?;
                        if lambda <= 0.0 {
                            return Err(Error::NonPositiveIntensity { agent: i, atom: j, value: lambda });
                        }
                        compensator += (lambda - 1.0) * atom.weight;
                    }
                }
                log_update -= compensator * dt;
                m *= log_update.exp();

                for event in path.jumps().iter().filter(|e| e.step == k) {
                    let lambda = model.intensity(event.agent, t, x, &action, event.mark)?;
                    if lambda <= 0.0 {
                        return Err(Error::NonPositiveIntensity {
                            agent: event.agent,
                            atom: event.mark_index,
                            value: lambda,
                        });
                    }
                    m *= lambda;
                }
                if !(m > 0.0) {
                    return Err(Error::Simulation(format!(
                        "density lost positivity on path {p} at step {k}"
                    )));
                }
                row[k + 1] = m;
            }
            Ok(row)
        })
        .collect();

    let mut values = vec![0.0; bundle.n_paths * n_nodes];
    for (p, row) in rows.into_iter().enumerate() {
        values[p * n_nodes..(p + 1) * n_nodes].copy_from_slice(&row?);
    }
    Ok(DensityPaths { n_paths: bundle.n_paths, n_nodes, values })
}
