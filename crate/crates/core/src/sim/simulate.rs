use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sim::bundle::{JumpEvent, PathBundle, SimMeasure};
use crate::sim::grid::TimeGrid;
use crate::sim::rng::path_rng;
use crate::sim::Policy;

/// Simulation knobs.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Per-step total jump probability above which the step is refused.
    pub jump_prob_cap: f64,
    /// Allow steps between the cap and 1; the thinning bias grows with the
    /// step size.
    pub override_cap: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { jump_prob_cap: 0.1, override_cap: false }
    }
}

/// Simulate under the controlled measure induced by `policy`: drifted Euler
/// dynamics and per-atom Bernoulli jump thinning with the controlled
/// intensities. Paths are reproducible from `(seed, path index)` regardless
/// of worker count.
pub fn simulate_paths(
    model: &ModelSpec,
    policy: &dyn Policy,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_paths_with(model, Some(policy), grid, n_paths, seed, SimOptions::default())
}

/// Simulate under the base measure: no drift, unit intensity modifiers.
pub fn simulate_base(model: &ModelSpec, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
    simulate_paths_with(model, None, grid, n_paths, seed, SimOptions::default())
}

pub fn simulate_paths_with(
    model: &ModelSpec,
    policy: Option<&dyn Policy>,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    options: SimOptions,
) -> Result<PathBundle> {
    if n_paths == 0 {
        return Err(Error::Simulation("need at least one path".into()));
    }
    let dn = model.state_dim();
    let n = model.noise_dim;
    let steps = grid.steps;
    let n_nodes = grid.n_nodes();
    let a_dim = model.actions.dim();

    struct PathOut {
        states: Vec<f64>,
        increments: Vec<f64>,
        jumps: Vec<JumpEvent>,
    }

    let results: Vec<Result<PathOut>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut states = vec![0.0; n_nodes * dn];
            let mut increments = vec![0.0; steps * n];
            let mut jumps = Vec::new();
            states[..dn].copy_from_slice(&model.initial_state);
            let mut sigma = vec![0.0; dn * n];
            let mut b = vec![0.0; n];
            let mut action = vec![0.0; a_dim];
            let dt = grid.dt();

            for k in 0..steps {
                let t = grid.node(k);
                let (head, tail) = states.split_at_mut((k + 1) * dn);
                let x = &head[k * dn..];
                let next = &mut tail[..dn];
                next.copy_from_slice(x);

                if let Some(policy) = policy {
                    policy.action_into(t, x, &mut action);
                }

                model.sigma_into(t, x, &mut sigma)?;
                if policy.is_some() {
                    model.drift_loading_into(t, x, &action, &mut b)?;
                    for r in 0..dn {
                        let mut drift = 0.0;
                        for c in 0..n {
                            drift += sigma[r * n + c] * b[c];
                        }
                        next[r] += drift * dt;
                    }
                }

                for c in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    let dw = z * dt.sqrt();
                    increments[k * n + c] = dw;
                    for r in 0..dn {
                        next[r] += sigma[r * n + c] * dw;
                    }
                }

                // Per-atom Bernoulli thinning. Draw one uniform per atom in a
                // fixed order so the stream layout is stable.
                let mut total_prob = 0.0;
                for i in 0..model.n_agents {
                    let block = model.agent_block(i);
                    for (j, atom) in model.jumps[i].atoms.iter().enumerate() {
                        let lambda = match policy {
                            Some(_) => model.intensity(i, t, x, &action, atom.mark)?,
                            None => 1.0,
                        };
                        if lambda <= 0.0 {
                            return Err(Error::NonPositiveIntensity { agent: i, atom: j, value: lambda });
                        }
                        let prob = lambda * atom.weight * dt;
                        total_prob += prob;
                        let u: f64 = rng.gen();
                        if u < prob {
                            let size = model.jump_size(i, t, x, atom.mark)?;
                            for (r, s) in block.clone().zip(&size) {
                                next[r] += s;
                            }
                            jumps.push(JumpEvent {
                                step: k,
                                agent: i,
                                mark_index: j,
                                mark: atom.mark,
                                size,
                            });
                        }
                    }
                }
                if total_prob > 1.0 {
                    return Err(Error::Simulation(format!(
                        "total per-step jump probability {total_prob:.3} exceeds 1 at step {k}; refine the time grid"
                    )));
                }
                if total_prob > options.jump_prob_cap && !options.override_cap {
                    return Err(Error::JumpProbabilityCap {
                        total: total_prob,
                        cap: options.jump_prob_cap,
                        step: k,
                    });
                }
            }
            Ok(PathOut { states, increments, jumps })
        })
        .collect();

    let mut states = vec![0.0; n_paths * n_nodes * dn];
    let mut increments = vec![0.0; n_paths * steps * n];
    let mut jumps = Vec::with_capacity(n_paths);
    for (p, r) in results.into_iter().enumerate() {
        let out = r?;
        states[p * n_nodes * dn..(p + 1) * n_nodes * dn].copy_from_slice(&out.states);
        increments[p * steps * n..(p + 1) * steps * n].copy_from_slice(&out.increments);
        jumps.push(out.jumps);
    }

    Ok(PathBundle {
        grid,
        state_dim: dn,
        noise_dim: n,
        n_paths,
        measure: if policy.is_some() { SimMeasure::Controlled } else { SimMeasure::Base },
        seed,
        states,
        increments,
        jumps,
    })
}
