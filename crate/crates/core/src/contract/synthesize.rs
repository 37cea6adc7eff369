//! Pathwise synthesis of the optimal terminal payments.
//!
//! The payment of agent `i` is the terminal value of its certainty
//! equivalent accumulated forward from `U_A^{-1}(R_0)` under the feedback
//! controls: the drift collects the squared-loading and discount terms plus
//! the jump compensator, the diffusion term loads on the controlled state,
//! and realized jumps subtract the stored compensation. This is the same
//! recursion as the certainty-equivalent forward pass, and shares its code.

use crate::bsde::{agent_value_estimate, forward_y};
use crate::error::Result;
use crate::hjb::FeedbackPolicy;
use crate::model::{Ctx, ModelSpec};
use crate::nash::{BrParams, ControlPolicy, GeneratorMode};
use crate::num::mean_stderr;
use crate::sim::PathBundle;

use super::outcome::ContractOutcome;

/// Build the contract along an equilibrium-measure bundle. `y0` defaults to
/// the certainty equivalents of the reservation values.
pub fn synthesize_contract(
    model: &ModelSpec,
    policy: &FeedbackPolicy,
    y0: Option<Vec<f64>>,
    bundle: &PathBundle,
    br: &BrParams,
) -> Result<ContractOutcome> {
    let y0 = match y0 {
        Some(y) => y,
        None => model
            .agents
            .iter()
            .map(|a| a.utility.inverse(a.reservation))
            .collect::<Result<Vec<f64>>>()?,
    };

    let y_paths = forward_y(model, &y0, policy, bundle, GeneratorMode::CaraG, br)?;
    let xi = y_paths.terminal_slices();

    // Flow payments along each path.
    let n_agents = model.n_agents;
    let steps = bundle.grid.steps;
    let mut chi = Vec::with_capacity(bundle.n_paths);
    for p in 0..bundle.n_paths {
        let mut row = vec![0.0; steps * n_agents];
        for k in 0..steps {
            let cp = policy.control_at(bundle.grid.node(k), bundle.state(p, k));
            row[k * n_agents..(k + 1) * n_agents].copy_from_slice(&cp.k);
        }
        chi.push(row);
    }

    let action_policy = policy.as_action_policy();
    let agent_values = agent_value_estimate(model, &xi, policy, &action_policy, bundle)?;
    let principal = principal_value(model, &xi, policy, bundle)?;

    Ok(ContractOutcome {
        xi,
        chi,
        y0,
        agent_values,
        principal_value: principal,
        policy_hash: policy.surface_hash,
    })
}

/// Monte Carlo estimate of the principal's objective under the contract:
/// `E[e^{-int r} U_P(L(X_T) - sum_i xi^i) - int e^{-int r} u_P(chi) dt]`.
pub fn principal_value(
    model: &ModelSpec,
    xi: &[Vec<f64>],
    chi: &dyn ControlPolicy,
    bundle: &PathBundle,
) -> Result<(f64, f64)> {
    let steps = bundle.grid.steps;
    let dt = bundle.grid.dt();
    let mut samples = Vec::with_capacity(bundle.n_paths);
    for p in 0..bundle.n_paths {
        let path = bundle.path(p);
        let mut disc = 0.0f64;
        let mut flow = 0.0f64;
        for k in 0..steps {
            let t = bundle.grid.node(k);
            let x = path.state(k);
            let kvec = chi.control_at(t, x).k;
            let ctx = Ctx { t, x, k: &kvec, ..Default::default() };
            let u_p = model.principal.flow_disutility.eval_checked(&ctx, "u_P")?;
            flow += (-disc).exp() * u_p * dt;
            let r = model.principal.discount.eval_checked(&ctx, "r")?;
            disc += r * dt;
        }
        let liquidation = model.liquidation(path.terminal_state())?;
        let total_pay: f64 = xi[p].iter().sum();
        let sample =
            (-disc).exp() * model.principal.terminal_utility.eval(liquidation - total_pay) - flow;
        samples.push(sample);
    }
    Ok(mean_stderr(&samples))
}
