//! Structural validation of model instances.
//!
//! The probe set is deterministic: a 3-point lattice per state dimension over
//! the declared state box, the corners and center of the action box, three
//! time points, and two payment levels. Soft failures are collected into a
//! report; a coefficient evaluating to a non-finite value is a hard error.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::expr::Ctx;
use crate::model::types::ModelSpec;

/// One failed invariant with the probe that exposed it.
#[derive(Debug, Clone)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.invariant, self.detail)
    }
}

/// Outcome of [`validate`]; the model is usable only when empty.
#[derive(Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, invariant: &'static str, detail: String) {
        self.violations.push(Violation { invariant, detail });
    }
}

/// A model that passed validation, cheap to share across workers.
#[derive(Debug, Clone)]
pub struct ValidatedModel(Arc<ModelSpec>);

impl ValidatedModel {
    pub fn new(model: ModelSpec) -> Result<Self> {
        let report = validate(&model)?;
        if report.is_empty() {
            Ok(ValidatedModel(Arc::new(model)))
        } else {
            Err(Error::Invalid(
                report.violations.len(),
                report.violations[0].to_string(),
            ))
        }
    }
}

impl std::ops::Deref for ValidatedModel {
    type Target = ModelSpec;

    fn deref(&self) -> &ModelSpec {
        &self.0
    }
}

/// 3-point lattice over the state box.
fn state_probes(model: &ModelSpec) -> Vec<Vec<f64>> {
    let dim = model.state_dim();
    let levels: Vec<Vec<f64>> = (0..dim)
        .map(|j| {
            let (lo, hi) = (model.state_lo[j], model.state_hi[j]);
            vec![lo, 0.5 * (lo + hi), hi]
        })
        .collect();
    let mut out = Vec::with_capacity(3usize.pow(dim as u32));
    let mut idx = vec![0usize; dim];
    loop {
        out.push((0..dim).map(|j| levels[j][idx[j]]).collect());
        let mut j = 0;
        loop {
            if j == dim {
                return out;
            }
            idx[j] += 1;
            if idx[j] < 3 {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn action_probes(model: &ModelSpec) -> Vec<Vec<f64>> {
    let mut probes = model.actions.corners();
    probes.push(model.actions.center());
    probes
}

pub fn validate(model: &ModelSpec) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let dn = model.state_dim();

    // Structural dimensions.
    if model.volatility.len() != dn || model.volatility.iter().any(|r| r.len() != model.noise_dim) {
        report.push(
            "sigma_shape",
            format!(
                "volatility must be {dn} x {} (one {}-row block per agent)",
                model.noise_dim, model.outcome_dim
            ),
        );
    }
    if model.drift_loading.len() != model.noise_dim {
        report.push("drift_shape", format!("drift loading must have {} entries", model.noise_dim));
    }
    if model.jumps.len() != model.n_agents || model.agents.len() != model.n_agents {
        report.push("agent_count", "jumps and agents must list one entry per agent".into());
    }
    if model.actions.agents.len() != model.n_agents {
        report.push("action_count", "action space must list one box per agent".into());
    }
    if model.initial_state.len() != dn || model.state_lo.len() != dn || model.state_hi.len() != dn {
        report.push("state_shape", format!("initial state and state box must have {dn} entries"));
    }
    if !report.is_empty() {
        // Dimension mismatches poison every probe below.
        return Ok(report);
    }
    if !(model.horizon > 0.0 && model.horizon.is_finite()) {
        report.push("horizon", format!("horizon must be positive and finite, got {}", model.horizon));
    }

    // Action box bounds.
    for (i, agent_box) in model.actions.agents.iter().enumerate() {
        if agent_box.lower.len() != agent_box.upper.len() || agent_box.lower.is_empty() {
            report.push("action_box", format!("agent {i}: malformed action box"));
            continue;
        }
        for j in 0..agent_box.dim() {
            let (lo, hi) = (agent_box.lower[j], agent_box.upper[j]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                report.push(
                    "action_box",
                    format!("agent {i} coordinate {j}: need finite lower <= upper, got [{lo}, {hi}]"),
                );
            }
        }
    }

    // State box sanity.
    for j in 0..dn {
        if !(model.state_lo[j] < model.state_hi[j]) {
            report.push("state_box", format!("dimension {j}: lower bound must be below upper"));
        }
        if model.initial_state[j] <= model.state_lo[j] || model.initial_state[j] >= model.state_hi[j] {
            report.push(
                "state_box",
                format!("dimension {j}: initial state must lie strictly inside the state box"),
            );
        }
    }
    if !report.is_empty() {
        return Ok(report);
    }

    let xs = state_probes(model);
    let actions = action_probes(model);
    let times = [0.0, 0.5 * model.horizon, model.horizon];
    let k_zero = vec![0.0; model.n_agents];
    let k_one = vec![1.0; model.n_agents];
    let payments = [k_zero, k_one];

    // Coefficient finiteness (hard errors) and sign constraints.
    for &t in &times {
        for x in &xs {
            model.sigma_at(t, x)?;
            let ctx = Ctx { t, x, ..Default::default() };
            model.principal.liquidation.eval_checked(&ctx, "L")?;
            let r = model.principal.discount.eval_checked(&ctx, "r")?;
            if r < 0.0 {
                report.push("principal_discount", format!("r(t={t}, x={x:?}) = {r} < 0"));
            }
            for a in &actions {
                let mut b = vec![0.0; model.noise_dim];
                model.drift_loading_into(t, x, a, &mut b)?;
                for (i, (agent, jump)) in model.agents.iter().zip(&model.jumps).enumerate() {
                    for k in &payments {
                        let ctx = Ctx { t, x, a, k, ..Default::default() };
                        agent.discount.eval_checked(&ctx, "rho")?;
                        let c = agent.cost.eval_checked(&ctx, "c")?;
                        let ua = agent.flow_utility.eval_checked(&ctx, "u_A")?;
                        if agent.is_cara() && (c != 0.0 || ua != 0.0) {
                            report.push(
                                "cara_consistency",
                                format!(
                                    "agent {i}: exponential utility requires c == 0 and u_A == 0, got c={c}, u_A={ua} at t={t}"
                                ),
                            );
                        }
                    }
                    for (j, atom) in jump.atoms.iter().enumerate() {
                        let lambda = model.intensity(i, t, x, a, atom.mark)?;
                        if lambda <= 0.0 {
                            report.push(
                                "intensity_positive",
                                format!("agent {i} atom {j}: lambda = {lambda} at t={t}, x={x:?}, a={a:?}"),
                            );
                        }
                        let size = model.jump_size(i, t, x, atom.mark)?;
                        if !atom.inert && size.iter().all(|s| *s == 0.0) {
                            report.push(
                                "jump_size_zero",
                                format!(
                                    "agent {i} atom {j}: zero jump size on a non-inert atom at t={t}, x={x:?}"
                                ),
                            );
                        }
                    }
                }
            }
        }
    }

    // Jump atoms.
    for (i, jump) in model.jumps.iter().enumerate() {
        if !jump.atoms.is_empty() && jump.active_atoms().count() == 0 {
            report.push("jump_atoms", format!("agent {i}: jump component has no active atom"));
        }
        for (j, atom) in jump.atoms.iter().enumerate() {
            if !(atom.weight >= 0.0 && atom.weight.is_finite()) {
                report.push("jump_weight", format!("agent {i} atom {j}: weight {} invalid", atom.weight));
            }
        }
        if jump.size.len() != model.outcome_dim {
            report.push("jump_size_shape", format!("agent {i}: jump size map must have {} components", model.outcome_dim));
        }
    }

    // Terminal utilities: monotone with a faithful inverse.
    let utility_probes = [-2.0, -1.0, -0.3, 0.0, 0.7, 1.5];
    for (i, agent) in model.agents.iter().enumerate() {
        let mut prev = f64::NEG_INFINITY;
        for &p in &utility_probes {
            let u = agent.utility.eval(p);
            if u <= prev {
                report.push("utility_monotone", format!("agent {i}: U_A not strictly increasing at {p}"));
            }
            prev = u;
            match agent.utility.inverse(u) {
                Ok(back) => {
                    let rel = (back - p).abs() / p.abs().max(1.0);
                    if rel > 1e-10 {
                        report.push(
                            "utility_inverse",
                            format!("agent {i}: U_A inverse round-trip failed at {p} (error {rel:.2e})"),
                        );
                    }
                }
                Err(e) => report.push("utility_inverse", format!("agent {i}: {e}")),
            }
        }
        if !agent.reservation.is_finite() {
            report.push("reservation", format!("agent {i}: reservation value must be finite"));
        } else if agent.utility.inverse(agent.reservation).is_err() {
            report.push(
                "reservation",
                format!("agent {i}: reservation value {} outside Im(U_A)", agent.reservation),
            );
        }
    }

    // Risk-neutral principal: identity terminal utility, zero discounting.
    if model.principal.risk_neutral {
        for &p in &utility_probes {
            let u = model.principal.terminal_utility.eval(p);
            if u != p {
                report.push(
                    "risk_neutral",
                    format!("risk-neutral flag set but U_P({p}) = {u} differs from its argument"),
                );
            }
        }
        for &t in &times {
            for x in xs.iter().take(3) {
                let ctx = Ctx { t, x, ..Default::default() };
                let r = model.principal.discount.eval(&ctx);
                if r != 0.0 {
                    report.push("risk_neutral", format!("risk-neutral flag set but r(t={t}) = {r} != 0"));
                }
            }
        }
    }

    // Flow disutility finite at payment probes.
    for k in &payments {
        let ctx = Ctx { k, ..Default::default() };
        model.principal.flow_disutility.eval_checked(&ctx, "u_P")?;
    }

    Ok(report)
}
