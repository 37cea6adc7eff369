//! Monte Carlo estimate of each agent's value under a given contract and
//! joint response.

use crate::error::{Error, Result};
use crate::model::{Ctx, ModelSpec};
use crate::nash::ControlPolicy;
use crate::num::mean_stderr;
use crate::sim::{PathBundle, Policy};

/// Discounted utility of terminal pay plus flow terms, averaged over the
/// bundle (which must be simulated under the joint response policy):
/// `E[e^{-int rho} U_A(xi) + int e^{-int rho} (u_A - c) dt]` with
/// left-endpoint quadrature for the discount integral.
///
/// `xi` holds the terminal payment per path and agent.
pub fn agent_value_estimate(
    model: &ModelSpec,
    xi: &[Vec<f64>],
    chi: &dyn ControlPolicy,
    response: &dyn Policy,
    bundle: &PathBundle,
) -> Result<Vec<(f64, f64)>> {
    Ok(agent_value_samples(model, xi, chi, response, bundle)?
        .iter()
        .map(|s| mean_stderr(s))
        .collect())
}

/// Per-path utility samples per agent; verification harnesses pair these
/// across runs that share random-number streams.
pub fn agent_value_samples(
    model: &ModelSpec,
    xi: &[Vec<f64>],
    chi: &dyn ControlPolicy,
    response: &dyn Policy,
    bundle: &PathBundle,
) -> Result<Vec<Vec<f64>>> {
    if xi.len() != bundle.n_paths {
        return Err(Error::Verification("terminal payments must cover every path".into()));
    }
    let n_agents = model.n_agents;
    let steps = bundle.grid.steps;
    let dt = bundle.grid.dt();
    let a_dim = model.actions.dim();

    let mut samples = vec![Vec::with_capacity(bundle.n_paths); n_agents];
    let mut action = vec![0.0; a_dim];
    for p in 0..bundle.n_paths {
        let path = bundle.path(p);
        let mut disc = vec![0.0f64; n_agents];
        let mut flow = vec![0.0f64; n_agents];
        for k in 0..steps {
            let t = bundle.grid.node(k);
            let x = path.state(k);
            response.action_into(t, x, &mut action);
            let kvec = chi.control_at(t, x).k;
            let ctx = Ctx { t, x, a: &action, k: &kvec, ..Default::default() };
            for i in 0..n_agents {
                let u_flow = model.agents[i].flow_utility.eval_checked(&ctx, "u_A")?;
                let cost = model.agents[i].cost.eval_checked(&ctx, "c")?;
                flow[i] += (-disc[i]).exp() * (u_flow - cost) * dt;
                let rho = model.agents[i].discount.eval_checked(&ctx, "rho")?;
                disc[i] += rho * dt;
            }
        }
        for i in 0..n_agents {
            let pay = xi[p][i];
            if !pay.is_finite() {
                return Err(Error::Verification(format!(
                    "terminal payment for agent {i} not finite on path {p}"
                )));
            }
            let total = (-disc[i]).exp() * model.agents[i].utility.eval(pay) + flow[i];
            if !total.is_finite() {
                return Err(Error::Verification(format!(
                    "agent {i} value sample not finite on path {p}"
                )));
            }
            samples[i].push(total);
        }
    }
    Ok(samples)
}
