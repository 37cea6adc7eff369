//! Monte Carlo falsification harness for incentive compatibility and the
//! participation constraint.

use crate::bsde::{agent_value_samples, forward_y};
use crate::error::{Error, Result};
use crate::hjb::FeedbackPolicy;
use crate::model::ModelSpec;
use crate::nash::{BrParams, GeneratorMode};
use crate::num::mean_stderr;
use crate::sim::{simulate_paths, DeviatedPolicy, TimeGrid};

use super::outcome::{ContractOutcome, Deviation, DeviationReport, DeviationRow, ParticipationCheck};

/// Default deviation set: per agent and coordinate, nine constant levels
/// across the box (other own-coordinates at the box center), plus the
/// clamped zero action.
pub fn default_deviations(model: &ModelSpec) -> Vec<Deviation> {
    let mut out = Vec::new();
    for (i, agent_box) in model.actions.agents.iter().enumerate() {
        let center: Vec<f64> = agent_box
            .lower
            .iter()
            .zip(&agent_box.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect();
        for c in 0..agent_box.dim() {
            for g in 0..9 {
                let v = agent_box.lower[c]
                    + (agent_box.upper[c] - agent_box.lower[c]) * g as f64 / 8.0;
                let mut action = center.clone();
                action[c] = v;
                out.push(Deviation { agent: i, action, label: format!("a{i}[{c}]={v:.3}") });
            }
        }
        let zero: Vec<f64> = agent_box
            .lower
            .iter()
            .zip(&agent_box.upper)
            .map(|(lo, hi)| 0.0f64.clamp(*lo, *hi))
            .collect();
        out.push(Deviation { agent: i, action: zero, label: format!("a{i}=zero") });
    }
    out
}

/// Gains below this are indistinguishable from floating-point noise: a
/// deviation that coincides with the recommendation reproduces the
/// equilibrium samples bit-for-bit up to solver tolerance, and its paired
/// standard error collapses with the gain.
const GAIN_FLOOR: f64 = 1e-9;

/// Simulate unilateral deviations against the contract induced by the
/// feedback policy and report the paired value gains.
///
/// The contract is a path functional: terminal payments are re-accumulated
/// along the deviated paths from the same control tables. Deviation runs
/// share the equilibrium run's random-number streams, so gains are paired
/// per path and their standard errors reflect the common noise. A deviation
/// fails the verdict when its gain exceeds three paired standard errors and
/// the absolute noise floor.
pub fn verify_incentive_compatibility(
    model: &ModelSpec,
    policy: &FeedbackPolicy,
    y0: Option<Vec<f64>>,
    deviations: &[Deviation],
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    br: &BrParams,
) -> Result<DeviationReport> {
    if deviations.is_empty() {
        return Err(Error::Verification("deviation list must not be empty".into()));
    }
    for (idx, dev) in deviations.iter().enumerate() {
        if dev.agent >= model.n_agents {
            return Err(Error::Verification(format!("deviation {idx}: no agent {}", dev.agent)));
        }
        let range = model.actions.agent_range(dev.agent);
        if dev.action.len() != range.len() {
            return Err(Error::Verification(format!(
                "deviation {idx}: action has {} coordinates, agent {} has {}",
                dev.action.len(),
                dev.agent,
                range.len()
            )));
        }
        let agent_box = &model.actions.agents[dev.agent];
        for c in 0..dev.action.len() {
            if dev.action[c] < agent_box.lower[c] - 1e-12 || dev.action[c] > agent_box.upper[c] + 1e-12
            {
                return Err(Error::Verification(format!(
                    "deviation {idx} rejected: coordinate {c} leaves the action box"
                )));
            }
        }
    }

    let y0 = match y0 {
        Some(y) => y,
        None => model
            .agents
            .iter()
            .map(|a| a.utility.inverse(a.reservation))
            .collect::<Result<Vec<f64>>>()?,
    };

    let equilibrium_policy = policy.as_action_policy();
    let bundle_eq = simulate_paths(model, &equilibrium_policy, grid, n_paths, seed)?;
    let xi_eq = forward_y(model, &y0, policy, &bundle_eq, GeneratorMode::CaraG, br)?
        .terminal_slices();
    let samples_eq = agent_value_samples(model, &xi_eq, policy, &equilibrium_policy, &bundle_eq)?;
    let equilibrium: Vec<(f64, f64)> = samples_eq.iter().map(|s| mean_stderr(s)).collect();

    let mut rows = Vec::with_capacity(deviations.len());
    let mut pass = true;
    for dev in deviations {
        let deviated = DeviatedPolicy {
            base: &equilibrium_policy,
            agent_range: model.actions.agent_range(dev.agent),
            action: dev.action.clone(),
        };
        let bundle_dev = simulate_paths(model, &deviated, grid, n_paths, seed)?;
        let xi_dev = forward_y(model, &y0, policy, &bundle_dev, GeneratorMode::CaraG, br)?
            .terminal_slices();
        let samples_dev = agent_value_samples(model, &xi_dev, policy, &deviated, &bundle_dev)?;
        let (value, value_stderr) = mean_stderr(&samples_dev[dev.agent]);
        let gains: Vec<f64> = samples_dev[dev.agent]
            .iter()
            .zip(&samples_eq[dev.agent])
            .map(|(d, e)| d - e)
            .collect();
        let (gain, gain_stderr) = mean_stderr(&gains);
        if gain > (3.0 * gain_stderr).max(GAIN_FLOOR) {
            pass = false;
        }
        rows.push(DeviationRow {
            agent: dev.agent,
            label: dev.label.clone(),
            value,
            value_stderr,
            gain,
            gain_stderr,
        });
    }

    Ok(DeviationReport { equilibrium, rows, pass, n_paths, seed })
}

/// Participation flags: estimated value at least the reservation value, up
/// to three standard errors.
pub fn verify_participation(outcome: &ContractOutcome, reservations: &[f64]) -> Vec<ParticipationCheck> {
    outcome
        .agent_values
        .iter()
        .zip(reservations)
        .map(|((value, stderr), r0)| ParticipationCheck {
            ok: value - r0 >= -3.0 * stderr,
            margin: value - r0,
            stderr: *stderr,
        })
        .collect()
}
