//! The principal's running reward and Hamiltonian.
//!
//! Requires exponential-utility agents and a risk-neutral principal. The sup
//! over controls runs a deterministic cyclic coordinate ascent (golden
//! section per coordinate) with the inner Nash fixed point resolved at every
//! objective evaluation. For models whose intensity modifiers are
//! mark-independent the objective is concave in the loadings and a single
//! start suffices; otherwise a small set of deterministic starts is used.

use crate::error::Result;
use crate::model::{Ctx, ModelSpec, Slot};
use crate::nash::best_response::{solve_fixed_point, BestResponse, BrParams};
use crate::nash::control::ControlPoint;
use crate::nash::generators::{ControlEval, GeneratorMode, StatePoint};
use crate::num::golden_max;

/// How the drift reward enters the objective: `Gradient(p)` uses
/// `p . Sigma(x) b(x, a)` (the Hamiltonian of the dynamic-programming
/// equation); `Zeta(zeta)` uses `zeta . b(x, a)` (the driver of the FBSDE
/// representation).
#[derive(Debug, Clone, Copy)]
pub enum DriftMode<'a> {
    Gradient(&'a [f64]),
    Zeta(&'a [f64]),
}

#[derive(Debug, Clone, Copy)]
pub struct OptParams {
    /// Search box half-width per z coordinate.
    pub z_max: f64,
    /// Search box half-width per h coordinate.
    pub h_max: f64,
    /// Upper bound per flow-payment coordinate.
    pub k_max: f64,
    /// Improvement tolerance per ascent round.
    pub coord_tol: f64,
    /// Max coordinate-ascent rounds per start.
    pub max_rounds: usize,
    /// Objective evaluation budget across all starts.
    pub budget: usize,
    /// Force multi-start on or off; `None` auto-detects from mark
    /// dependence of the intensities.
    pub multi_start: Option<bool>,
    pub br: BrParams,
}

impl Default for OptParams {
    fn default() -> Self {
        OptParams {
            z_max: 4.0,
            h_max: 4.0,
            k_max: 4.0,
            coord_tol: 1e-6,
            max_rounds: 12,
            budget: 400_000,
            multi_start: None,
            br: BrParams::default(),
        }
    }
}

/// Result of maximizing the principal's reward at one point.
#[derive(Debug, Clone)]
pub struct HamiltonianResult {
    pub value: f64,
    pub control: ControlPoint,
    /// Nash response at the maximizing control.
    pub action: Vec<f64>,
    /// Budget ran out while still improving: the value is a lower bound.
    pub budget_exhausted: bool,
    /// Distinct near-optimal controls detected (value gap below tolerance,
    /// argument gap an order of magnitude above); the lexicographically
    /// smallest is kept.
    pub near_tie: bool,
}

/// The running reward `phi(t, x, z, h, k)` of the reformulated principal
/// problem, evaluated at the agents' Nash response.
pub fn phi_eval(
    model: &ModelSpec,
    t: f64,
    x: &[f64],
    cp: &ControlPoint,
    params: &BrParams,
) -> Result<f64> {
    model.require_cara_risk_neutral()?;
    let state = StatePoint::new(model, t, x)?;
    let (value, _) = phi_on_state(&state, cp, params)?;
    Ok(value)
}

/// `phi` plus the fixed point it was evaluated at.
pub(crate) fn phi_on_state(
    state: &StatePoint,
    cp: &ControlPoint,
    params: &BrParams,
) -> Result<(f64, BestResponse)> {
    let model = state.model;
    let eval = ControlEval::new(state, cp, &vec![0.0; model.n_agents], GeneratorMode::CaraG)?;
    let br = solve_fixed_point(&eval, params)?;
    let a = &br.action;
    let ctx = Ctx { t: state.t, x: &state.x, a, k: &cp.k, ..Default::default() };
    let mut value = 0.0;
    for (i, agent) in model.agents.iter().enumerate() {
        let ra = agent.risk_aversion().expect("checked CARA");
        let rho = agent.discount.eval_checked(&ctx, "rho")?;
        value += rho / ra - 0.5 * ra * eval.zeta_sq(i);
    }
    value += eval.principal_jump_bracket(cp, a)?;
    let k_ctx = Ctx { t: state.t, x: &state.x, k: &cp.k, ..Default::default() };
    value -= model.principal.flow_disutility.eval_checked(&k_ctx, "u_P")?;
    Ok((value, br))
}

/// The maximand of the Hamiltonian at a fixed control: `phi` plus the drift
/// reward. Exposed so stored argmaxes can be re-scored exactly.
pub fn hamiltonian_objective(
    model: &ModelSpec,
    t: f64,
    x: &[f64],
    drift: DriftMode,
    cp: &ControlPoint,
    params: &BrParams,
) -> Result<(f64, BestResponse)> {
    let state = StatePoint::new(model, t, x)?;
    let weights = drift_weights(&state, drift);
    objective_on_state(&state, &weights, cp, params)
}

/// Pre-multiplied drift weights: `p Sigma` in gradient mode, `zeta` as-is.
fn drift_weights(state: &StatePoint, drift: DriftMode) -> Vec<f64> {
    match drift {
        DriftMode::Gradient(p) => {
            let mut w = vec![0.0; state.model.noise_dim];
            state.left_mul_sigma(p, &mut w);
            w
        }
        DriftMode::Zeta(zeta) => zeta.to_vec(),
    }
}

fn objective_on_state(
    state: &StatePoint,
    drift_weights: &[f64],
    cp: &ControlPoint,
    params: &BrParams,
) -> Result<(f64, BestResponse)> {
    let model = state.model;
    let (phi, br) = phi_on_state(state, cp, params)?;
    let mut b = vec![0.0; model.noise_dim];
    model.drift_loading_into(state.t, &state.x, &br.action, &mut b)?;
    let reward: f64 = drift_weights.iter().zip(&b).map(|(w, bi)| w * bi).sum();
    Ok((phi + reward, br))
}

/// True when flow payments cannot help: no agent's discount rate reacts to
/// payments and the principal's flow disutility is nondecreasing, both
/// checked on probe evaluations.
pub fn k_is_irrelevant(model: &ModelSpec) -> bool {
    let t = 0.5 * model.horizon;
    let x: Vec<f64> = model
        .state_lo
        .iter()
        .zip(&model.state_hi)
        .map(|(lo, hi)| 0.5 * (lo + hi))
        .collect();
    let a = model.actions.center();
    let levels = [0.0, 0.5, 1.0, 2.0];
    for i in 0..model.n_agents {
        let mut seen = None;
        for &c in &levels {
            let k = vec![c; model.n_agents];
            let ctx = Ctx { t, x: &x, a: &a, k: &k, e: 0.0 };
            let rho = model.agents[i].discount.eval(&ctx);
            match seen {
                None => seen = Some(rho),
                Some(prev) if prev != rho => return false,
                _ => {}
            }
        }
    }
    for i in 0..model.n_agents {
        let mut prev = f64::NEG_INFINITY;
        for &c in &levels {
            let mut k = vec![0.0; model.n_agents];
            k[i] = c;
            let ctx = Ctx { k: &k, ..Default::default() };
            let u = model.principal.flow_disutility.eval(&ctx);
            if u < prev {
                return false;
            }
            prev = u;
        }
    }
    true
}

fn intensities_mark_dependent(model: &ModelSpec) -> bool {
    model
        .jumps
        .iter()
        .any(|j| j.atoms.len() > 1 && j.intensity.uses_slot(Slot::Mark))
}

/// Maximize the principal's pointwise reward over `(z, h, k)`.
pub fn hamiltonian_sup(
    model: &ModelSpec,
    t: f64,
    x: &[f64],
    drift: DriftMode,
    opt: &OptParams,
) -> Result<HamiltonianResult> {
    model.require_cara_risk_neutral()?;
    let state = StatePoint::new(model, t, x)?;
    hamiltonian_sup_on_state(&state, drift, opt)
}

pub(crate) fn hamiltonian_sup_on_state(
    state: &StatePoint,
    drift: DriftMode,
    opt: &OptParams,
) -> Result<HamiltonianResult> {
    let model = state.model;
    let weights = drift_weights(state, drift);
    let k_active = !k_is_irrelevant(model);
    let multi_start = opt.multi_start.unwrap_or_else(|| intensities_mark_dependent(model));

    // Inner objective evaluations skip the fixed-point certificate; the
    // returned response below re-scores with the caller's settings.
    let inner_br = opt.br.without_certificate();

    let zero = ControlPoint::zeros(model);
    let mut starts = vec![zero.clone()];
    if multi_start {
        for scale in [0.5, -0.5, 0.25] {
            let mut cp = zero.clone();
            for idx in 0..cp.z.len() {
                cp.z[idx] = scale * opt.z_max;
            }
            for v in cp.h.values_mut() {
                *v = -scale * opt.h_max;
            }
            starts.push(cp);
        }
    }

    let n_z = zero.z.len();
    let n_h = zero.h.len();
    let coord_count = n_z + n_h + if k_active { zero.k.len() } else { 0 };
    let mut evals_left = opt.budget;
    let mut best: Option<(f64, ControlPoint, BestResponse)> = None;
    let mut near_tie = false;
    let mut budget_exhausted = false;

    for start in starts {
        let mut cp = start;
        let mut err = None;
        let score = |cp: &ControlPoint, evals_left: &mut usize, err: &mut Option<crate::error::Error>| -> f64 {
            if *evals_left == 0 {
                return f64::NEG_INFINITY;
            }
            *evals_left -= 1;
            match objective_on_state(state, &weights, cp, &inner_br) {
                Ok((v, _)) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            }
        };

        let mut current = score(&cp, &mut evals_left, &mut err);
        if let Some(e) = err {
            return Err(e);
        }
        let mut rounds = 0;
        loop {
            rounds += 1;
            let round_start = current;
            for c in 0..coord_count {
                let (lo, hi) = if c < n_z {
                    (-opt.z_max, opt.z_max)
                } else if c < n_z + n_h {
                    (-opt.h_max, opt.h_max)
                } else {
                    (0.0, opt.k_max)
                };
                let saved = cp.coord(c);
                let mut local_err = None;
                let (arg, val) = golden_max(
                    |v| {
                        cp.set_coord(c, v);
                        score(&cp, &mut evals_left, &mut local_err)
                    },
                    lo,
                    hi,
                    opt.coord_tol,
                    200,
                );
                if let Some(e) = local_err {
                    return Err(e);
                }
                if val > current {
                    cp.set_coord(c, arg);
                    current = val;
                } else {
                    cp.set_coord(c, saved);
                }
            }
            if evals_left == 0 {
                budget_exhausted = current - round_start > opt.coord_tol;
                break;
            }
            if current - round_start <= opt.coord_tol || rounds >= opt.max_rounds {
                break;
            }
        }

        let (value, br) = objective_on_state(state, &weights, &cp, &opt.br)?;
        match &mut best {
            None => best = Some((value, cp, br)),
            Some((bv, bcp, bbr)) => {
                let close = (value - *bv).abs() <= opt.coord_tol;
                let arg_gap = cp
                    .flat()
                    .iter()
                    .zip(bcp.flat())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                if close && arg_gap > 10.0 * opt.coord_tol {
                    near_tie = true;
                }
                let take = value > *bv + opt.coord_tol
                    || (close && cp.flat() < bcp.flat() && value >= *bv - opt.coord_tol);
                if take {
                    *bv = value.max(*bv);
                    *bcp = cp;
                    *bbr = br;
                }
            }
        }
    }

    let (value, control, br) = best.expect("at least one start");
    Ok(HamiltonianResult {
        value,
        control,
        action: br.action,
        budget_exhausted,
        near_tie,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::{builtin_model, ParamMap};

    fn hm() -> ModelSpec {
        builtin_model("holmstrom_milgrom", &ParamMap::new()).unwrap()
    }

    #[test]
    fn phi_vanishes_at_zero_control() {
        let model = hm();
        let cp = ControlPoint::zeros(&model);
        let phi = phi_eval(&model, 0.0, &[0.0], &cp, &BrParams::default()).unwrap();
        assert!(phi.abs() < 1e-9, "phi = {phi}");
    }

    #[test]
    fn phi_matches_hand_value_on_hm() {
        let model = hm();
        let mut cp = ControlPoint::zeros(&model);
        cp.z[0] = 0.5;
        let phi = phi_eval(&model, 0.0, &[0.0], &cp, &BrParams::default()).unwrap();
        // rho(a*)/R_A = -a*^2/2 = -0.125 plus -z^2 sigma^2 R_A / 2 = -0.125.
        assert!((phi + 0.25).abs() < 1e-6, "phi = {phi}");
    }

    #[test]
    fn zero_compensation_kills_the_jump_bracket() {
        let model = builtin_model("capponi_frei", &ParamMap::new()).unwrap();
        let cp = ControlPoint::zeros(&model);
        let phi = phi_eval(&model, 0.0, &[0.0], &cp, &BrParams::default()).unwrap();
        // (1 - e^0)/R + 0 = 0 per atom, rho(a*) = 0 at a* = (0, lambda0).
        assert!(phi.abs() < 1e-9, "phi = {phi}");
    }

    #[test]
    fn hm_hamiltonian_matches_closed_form() {
        let model = hm();
        let opt = OptParams::default();
        for (p, z_star, h_val) in [(1.0, 0.5, 0.25), (2.0, 1.0, 1.0)] {
            let res = hamiltonian_sup(&model, 0.0, &[0.0], DriftMode::Gradient(&[p]), &opt).unwrap();
            assert!((res.value - h_val).abs() < 1e-5, "p={p}: H = {}", res.value);
            assert!((res.control.z[0] - z_star).abs() < 1e-3, "p={p}: z* = {}", res.control.z[0]);
            assert!((res.action[0] - z_star).abs() < 1e-3);
            assert!(!res.budget_exhausted);
        }

        // Grid oracle over z for p = 1.
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..10_000 {
            let z = -4.0 + 8.0 * i as f64 / 9_999.0;
            let mut cp = ControlPoint::zeros(&model);
            cp.z[0] = z;
            let (v, _) = hamiltonian_objective(
                &model,
                0.0,
                &[0.0],
                DriftMode::Gradient(&[1.0]),
                &cp,
                &BrParams::default(),
            )
            .unwrap();
            grid_best = grid_best.max(v);
        }
        let res = hamiltonian_sup(&model, 0.0, &[0.0], DriftMode::Gradient(&[1.0]), &opt).unwrap();
        assert!((res.value - grid_best).abs() < 1e-5);
    }

    #[test]
    fn zero_gradient_gives_zero_hamiltonian() {
        let model = hm();
        let res = hamiltonian_sup(
            &model,
            0.0,
            &[0.0],
            DriftMode::Gradient(&[0.0]),
            &OptParams::default(),
        )
        .unwrap();
        assert!(res.value.abs() < 1e-7, "H = {}", res.value);
        assert!(res.control.z[0].abs() < 1e-3);
        assert!(res.control.k[0] == 0.0);
    }

    #[test]
    fn value_nondecreasing_in_search_box() {
        let model = hm();
        let mut prev = f64::NEG_INFINITY;
        for z_max in [0.3, 0.7, 2.0, 4.0] {
            let opt = OptParams { z_max, ..OptParams::default() };
            let res =
                hamiltonian_sup(&model, 0.0, &[0.0], DriftMode::Gradient(&[2.0]), &opt).unwrap();
            assert!(res.value >= prev - 1e-9, "box {z_max}: {} < {prev}", res.value);
            prev = res.value;
        }
    }

    #[test]
    fn objective_is_phi_plus_drift_reward() {
        let model = builtin_model("capponi_frei", &ParamMap::new()).unwrap();
        let p = [0.8];
        for (z, h) in [(0.0, 0.0), (0.5, -0.3), (-0.2, 0.4)] {
            let mut cp = ControlPoint::zeros(&model);
            cp.z[0] = z;
            cp.h.set(0, 0, 0, h);
            let (obj, br) = hamiltonian_objective(
                &model,
                0.2,
                &[0.3],
                DriftMode::Gradient(&p),
                &cp,
                &BrParams::default(),
            )
            .unwrap();
            let phi = phi_eval(&model, 0.2, &[0.3], &cp, &BrParams::default()).unwrap();
            let sb = model.sigma_b(0.2, &[0.3], &br.action).unwrap();
            let reward: f64 = p.iter().zip(&sb).map(|(pi, s)| pi * s).sum();
            assert!((obj - (phi + reward)).abs() < 1e-12);
        }
    }

    #[test]
    fn payments_detected_irrelevant_on_builtins() {
        for name in ["holmstrom_milgrom", "capponi_frei", "market_maker", "multi_agent_cara"] {
            let model = builtin_model(name, &ParamMap::new()).unwrap();
            assert!(k_is_irrelevant(&model), "{name}");
        }
    }

    #[test]
    fn cara_envelope_is_concave_along_z_lines() {
        // Second differences of G(z) along lines through the optimum stay
        // nonpositive up to tolerance (mark-independent intensities).
        let model = hm();
        let res =
            hamiltonian_sup(&model, 0.0, &[0.0], DriftMode::Gradient(&[1.0]), &OptParams::default())
                .unwrap();
        let z0 = res.control.z[0];
        let step = 0.05;
        let g_of = |z: f64| {
            let mut cp = ControlPoint::zeros(&model);
            cp.z[0] = z;
            let (values, _) = crate::nash::f_g_eval(
                &model,
                0.0,
                &[0.0],
                &[0.0],
                &cp,
                GeneratorMode::CaraG,
                &BrParams::default(),
            )
            .unwrap();
            values[0]
        };
        for offset in [-0.4, -0.1, 0.0, 0.2, 0.5] {
            let z = z0 + offset;
            let second = g_of(z + step) - 2.0 * g_of(z) + g_of(z - step);
            assert!(second <= 1e-6, "second difference {second} at z = {z}");
        }
    }
}
