//! Nash best-response fixed point at one `(t, x)` point.
//!
//! Gauss-Seidel sweeps: each agent in turn maximizes its own generator over
//! its action box (golden-section per coordinate), holding the others fixed.
//! Termination when the sup-norm change of the joint action over a sweep
//! drops below tolerance.

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::nash::control::ControlPoint;
use crate::nash::generators::{ControlEval, GeneratorMode, StatePoint};
use crate::num::golden_max;

#[derive(Debug, Clone, Copy)]
pub struct BrParams {
    /// Sup-norm action tolerance for sweep convergence.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Grid points per coordinate for the argmax certificate; below 2 the
    /// scan is skipped and the residual reported as zero. Inner optimizer
    /// loops skip it, callers that return a fixed point keep it.
    pub certificate_grid: usize,
}

impl Default for BrParams {
    fn default() -> Self {
        BrParams { tol: 1e-6, max_sweeps: 60, certificate_grid: 101 }
    }
}

impl BrParams {
    /// Same tolerances without the certificate scan.
    pub fn without_certificate(mut self) -> Self {
        self.certificate_grid = 0;
        self
    }
}

/// Converged fixed point with its certificate.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub action: Vec<f64>,
    /// Per-agent generator values at the fixed point.
    pub generator_values: Vec<f64>,
    pub sweeps: usize,
    /// Max over agents and coordinates of (gridded argmax value - value at
    /// the fixed point); nonpositive up to solver tolerance when the fixed
    /// point is a true coordinatewise argmax.
    pub residual: f64,
}

pub fn best_response_fixed_point(
    model: &ModelSpec,
    t: f64,
    x: &[f64],
    y: &[f64],
    cp: &ControlPoint,
    mode: GeneratorMode,
    params: &BrParams,
) -> Result<BestResponse> {
    let state = StatePoint::new(model, t, x)?;
    let eval = ControlEval::new(&state, cp, y, mode)?;
    solve_fixed_point(&eval, params)
}

/// Fixed point on a prebuilt [`ControlEval`]; hot loops use this to avoid
/// re-deriving the state-point data.
pub(crate) fn solve_fixed_point(eval: &ControlEval, params: &BrParams) -> Result<BestResponse> {
    let model = eval_model(eval);
    let mut action = model.actions.center();
    let mut b_buf = vec![0.0; model.noise_dim];
    let golden_tol = 0.25 * params.tol;
    let single_agent_single_coord = model.n_agents == 1 && model.actions.dim() == 1;

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < params.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for q in 0..model.n_agents {
            let range = model.actions.agent_range(q);
            for c in range {
                let (lo, hi) = coord_bounds(model, c);
                if hi - lo < f64::EPSILON {
                    action[c] = lo;
                    continue;
                }
                let prev = action[c];
                let mut failed = None;
                let (best, _) = golden_max(
                    |v| {
                        action[c] = v;
                        match eval.generator(q, &action, &mut b_buf) {
                            Ok(g) => g,
                            Err(e) => {
                                failed.get_or_insert(e);
                                f64::NEG_INFINITY
                            }
                        }
                    },
                    lo,
                    hi,
                    golden_tol,
                    200,
                );
                if let Some(e) = failed {
                    return Err(e);
                }
                action[c] = best;
                max_change = max_change.max((best - prev).abs());
            }
        }
        // A single scalar decision is a plain maximization: one sweep is the
        // fixed point and the confirmation pass is skipped.
        if max_change < params.tol || single_agent_single_coord {
            converged = true;
            break;
        }
    }

    // Certificate: per-coordinate grid scan around the fixed point.
    let mut residual = f64::NEG_INFINITY;
    let mut generator_values = vec![0.0; model.n_agents];
    for q in 0..model.n_agents {
        generator_values[q] = eval.generator(q, &action, &mut b_buf)?;
        if params.certificate_grid < 2 {
            continue;
        }
        for c in model.actions.agent_range(q) {
            let (lo, hi) = coord_bounds(model, c);
            let saved = action[c];
            let mut grid_best = f64::NEG_INFINITY;
            for g in 0..params.certificate_grid {
                let v = lo + (hi - lo) * g as f64 / (params.certificate_grid - 1) as f64;
                action[c] = v;
                grid_best = grid_best.max(eval.generator(q, &action, &mut b_buf)?);
            }
            action[c] = saved;
            residual = residual.max(grid_best - generator_values[q]);
        }
    }
    let residual = residual.max(0.0);

    if !converged {
        return Err(Error::NonConvergent { sweeps, residual, last_action: action });
    }
    Ok(BestResponse { action, generator_values, sweeps, residual })
}

fn eval_model<'m>(eval: &ControlEval<'_, 'm>) -> &'m ModelSpec {
    eval.model()
}

fn coord_bounds(model: &ModelSpec, flat_index: usize) -> (f64, f64) {
    let mut idx = flat_index;
    for agent_box in &model.actions.agents {
        if idx < agent_box.dim() {
            return (agent_box.lower[idx], agent_box.upper[idx]);
        }
        idx -= agent_box.dim();
    }
    unreachable!("flat action index out of range")
}

/// Componentwise generator values at the best-response fixed point.
pub fn f_g_eval(
    model: &ModelSpec,
    t: f64,
    x: &[f64],
    y: &[f64],
    cp: &ControlPoint,
    mode: GeneratorMode,
    params: &BrParams,
) -> Result<(Vec<f64>, BestResponse)> {
    let br = best_response_fixed_point(model, t, x, y, cp, mode, params)?;
    Ok((br.generator_values.clone(), br))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::{builtin_model, ParamMap};
    use crate::model::register_coeff;
    use crate::model::Expr;

    fn hm() -> ModelSpec {
        builtin_model("holmstrom_milgrom", &ParamMap::new()).unwrap()
    }

    fn hm_cp(z: f64) -> (ModelSpec, ControlPoint) {
        let model = hm();
        let mut cp = ControlPoint::zeros(&model);
        cp.z[0] = z;
        (model, cp)
    }

    #[test]
    fn hm_best_response_is_z_over_kappa() {
        let (model, cp) = hm_cp(0.5);
        let br = best_response_fixed_point(
            &model,
            0.0,
            &[0.0],
            &[0.0],
            &cp,
            GeneratorMode::CaraG,
            &BrParams::default(),
        )
        .unwrap();
        assert!((br.action[0] - 0.5).abs() < 1e-6, "a* = {}", br.action[0]);
        assert!(br.residual <= 1e-7);

        // Oracle: 10^4-point grid scan of g over the action box.
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..10_000 {
            let a = 2.0 * i as f64 / 9_999.0;
            let g = crate::nash::agent_generator_g(&model, 0, 0.0, &[0.0], &cp, &[a]).unwrap();
            if g > best.0 {
                best = (g, a);
            }
        }
        assert!((br.action[0] - best.1).abs() < 1e-3);
    }

    #[test]
    fn zero_loading_gives_zero_effort() {
        let (model, cp) = hm_cp(0.0);
        let br = best_response_fixed_point(
            &model,
            0.0,
            &[0.0],
            &[0.0],
            &cp,
            GeneratorMode::CaraG,
            &BrParams::default(),
        )
        .unwrap();
        assert!(br.action[0].abs() < 1e-6);
    }

    #[test]
    fn decoupled_agents_converge_in_one_extra_sweep() {
        let mut params = ParamMap::new();
        params.insert("n_agents".into(), 2.0);
        let model = builtin_model("multi_agent_cara", &params).unwrap();
        let mut cp = ControlPoint::zeros(&model);
        cp.z[0] = 0.5; // z^{1,1}
        cp.z[3] = 0.8; // z^{2,2}
        let (values, br) = f_g_eval(
            &model,
            0.0,
            &[0.0, 0.0],
            &[0.0, 0.0],
            &cp,
            GeneratorMode::CaraG,
            &BrParams::default(),
        )
        .unwrap();
        assert!((br.action[0] - 0.5).abs() < 1e-6);
        assert!((br.action[1] - 0.8).abs() < 1e-6);
        assert!(br.sweeps <= 2, "decoupled game took {} sweeps", br.sweeps);
        // G^i = z_i a_i - a_i^2/2 - z_i^2/2 at a_i = z_i gives 0.
        assert!(values.iter().all(|v| v.abs() < 1e-9), "{values:?}");
    }

    #[test]
    fn symmetric_agents_share_generator_values() {
        let mut params = ParamMap::new();
        params.insert("n_agents".into(), 2.0);
        let model = builtin_model("multi_agent_cara", &params).unwrap();
        let mut cp = ControlPoint::zeros(&model);
        cp.z[0] = 0.4;
        cp.z[3] = 0.4;
        let (values, _) = f_g_eval(
            &model,
            0.0,
            &[0.1, 0.1],
            &[0.0, 0.0],
            &cp,
            GeneratorMode::CaraG,
            &BrParams::default(),
        )
        .unwrap();
        assert!((values[0] - values[1]).abs() < 1e-10);
    }

    #[test]
    fn capponi_frei_intensity_matches_grid_scan() {
        let model = builtin_model("capponi_frei", &ParamMap::new()).unwrap();
        let mut cp = ControlPoint::zeros(&model);
        cp.z[0] = 0.6;
        cp.h.set(0, 0, 0, -std::f64::consts::LN_2);
        let br = best_response_fixed_point(
            &model,
            0.0,
            &[0.0],
            &[0.0],
            &cp,
            GeneratorMode::CaraG,
            &BrParams::default(),
        )
        .unwrap();
        // u* = z / kappa_u; lambda* = lambda0 + (1 - e^{R h}) w / kappa_l.
        assert!((br.action[0] - 0.6).abs() < 1e-6);
        assert!((br.action[1] - 1.5).abs() < 1e-6);

        // 1000-point grid scan over the intensity coordinate.
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..1000 {
            let lam = 0.5 + 1.5 * i as f64 / 999.0;
            let g = crate::nash::agent_generator_g(&model, 0, 0.0, &[0.0], &cp, &[br.action[0], lam])
                .unwrap();
            if g > best.0 {
                best = (g, lam);
            }
        }
        assert!((br.action[1] - best.1).abs() <= 1e-3);
    }

    #[test]
    fn fixed_point_certificate_holds_on_grid() {
        let (model, cp) = hm_cp(0.5);
        let state = crate::nash::StatePoint::new(&model, 0.0, &[0.0]).unwrap();
        let eval = ControlEval::new(&state, &cp, &[0.0], GeneratorMode::CaraG).unwrap();
        let br = solve_fixed_point(&eval, &BrParams::default()).unwrap();
        // 101-point grid scan of the coordinate map attains its max at a*.
        let mut b = vec![0.0; 1];
        let at_star = eval.generator(0, &br.action, &mut b).unwrap();
        for g in 0..101 {
            let a = [2.0 * g as f64 / 100.0];
            let v = eval.generator(0, &a, &mut b).unwrap();
            assert!(v <= at_star + 1e-7);
        }
    }

    #[test]
    fn cycling_game_reports_nonconvergence() {
        // Agent 1 matches agent 2; agent 2 mismatches: no pure fixed point
        // away from the center, so Gauss-Seidel cycles.
        register_coeff("br_test_match", |c| -10.0 * (c.a[0] - c.a[1]) * (c.a[0] - c.a[1]));
        register_coeff("br_test_mismatch", |c| {
            let target = 2.0 - c.a[0];
            -10.0 * (c.a[1] - target) * (c.a[1] - target)
        });
        let mut params = ParamMap::new();
        params.insert("n_agents".into(), 2.0);
        let mut model = builtin_model("multi_agent_cara", &params).unwrap();
        model.agents[0].discount = Expr::Named { name: "br_test_match".into() };
        model.agents[1].discount = Expr::Named { name: "br_test_mismatch".into() };
        // Shift agent 2's box so the sweep starts off the fixed point: the
        // iteration then oscillates with period two.
        model.actions.agents[1].upper = vec![1.6];
        let err = best_response_fixed_point(
            &model,
            0.0,
            &[0.0, 0.0],
            &[0.0, 0.0],
            &ControlPoint::zeros(&model),
            GeneratorMode::CaraG,
            &BrParams { tol: 1e-7, max_sweeps: 12, certificate_grid: 21 },
        )
        .unwrap_err();
        match err {
            Error::NonConvergent { sweeps, .. } => assert_eq!(sweeps, 12),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
