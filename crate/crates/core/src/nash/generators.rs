//! Per-point evaluation of the agents' BSDE generators.
//!
//! Two generator families share one code path: the continuation-value form
//! (general terminal utilities, `y`-dependent) and the certainty-equivalent
//! form for exponential utility. Evaluation is split into a per-`(t, x)`
//! stage and a per-control stage so the inner action loops only touch the
//! action-dependent terms.

use crate::error::{Error, Result};
use crate::model::{Ctx, ModelSpec};
use crate::nash::control::ControlPoint;

/// Which generator family to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorMode {
    /// Continuation utilities: `f^i = u_A - c - rho y^i + z Sigma b + sum_l int h dEta^l`.
    GeneralF,
    /// Certainty equivalents under exponential utility:
    /// `g^i = rho/R - z Sigma b ... ` with the `(1 - e^{R h})/R` jump bracket.
    CaraG,
}

/// An atom of agent `l`'s jump kernel that is live at the current `(t, x)`.
#[derive(Debug, Clone)]
pub(crate) struct ActiveAtom {
    pub mark: f64,
    pub weight: f64,
    /// Index into the h-table block of agent `l`.
    pub h_index: usize,
}

/// Everything about `(t, x)` the generators reuse across control points.
pub struct StatePoint<'m> {
    pub model: &'m ModelSpec,
    pub t: f64,
    pub x: Vec<f64>,
    /// `Sigma(t, x)`, row-major `state_dim x noise_dim`.
    pub sigma: Vec<f64>,
    pub(crate) active_atoms: Vec<Vec<ActiveAtom>>,
}

impl<'m> StatePoint<'m> {
    pub fn new(model: &'m ModelSpec, t: f64, x: &[f64]) -> Result<Self> {
        let sigma = model.sigma_at(t, x)?;
        let mut active_atoms = Vec::with_capacity(model.n_agents);
        for l in 0..model.n_agents {
            let mut atoms = Vec::new();
            for (j, atom) in model.jumps[l].atoms.iter().enumerate() {
                let Some(h_index) = model.active_atom_index(l, j) else {
                    continue;
                };
                let size = model.jump_size(l, t, x, atom.mark)?;
                if size.iter().all(|s| *s == 0.0) {
                    continue;
                }
                atoms.push(ActiveAtom { mark: atom.mark, weight: atom.weight, h_index });
            }
            active_atoms.push(atoms);
        }
        Ok(StatePoint { model, t, x: x.to_vec(), sigma, active_atoms })
    }

    /// `v Sigma(t, x)` for a `state_dim`-vector `v`, written into `out`
    /// (`noise_dim` entries).
    pub fn left_mul_sigma(&self, v: &[f64], out: &mut [f64]) {
        let n = self.model.noise_dim;
        for c in 0..n {
            let mut acc = 0.0;
            for (r, vr) in v.iter().enumerate() {
                acc += vr * self.sigma[r * n + c];
            }
            out[c] = acc;
        }
    }
}

/// Generator evaluation for a fixed `(t, x, z, h, k, y)`; only the action
/// varies between calls.
pub struct ControlEval<'s, 'm> {
    state: &'s StatePoint<'m>,
    mode: GeneratorMode,
    k: Vec<f64>,
    y: Vec<f64>,
    /// `zeta^i = z^{i,:} Sigma`, row-major `n_agents x noise_dim`.
    zeta: Vec<f64>,
    /// `|zeta^i|^2` per agent.
    zeta_sq: Vec<f64>,
    /// Per (i, l, active atom j): the action-independent jump coefficient,
    /// so the jump term is `sum coeff * lambda(t, x, a, mark)`.
    jump_coeff: Vec<f64>,
    /// `u_A^i(k)` (zero in certainty-equivalent mode).
    flow_utility: Vec<f64>,
    atoms_per_row: usize,
}

impl<'s, 'm> ControlEval<'s, 'm> {
    pub fn new(
        state: &'s StatePoint<'m>,
        cp: &ControlPoint,
        y: &[f64],
        mode: GeneratorMode,
    ) -> Result<Self> {
        let model = state.model;
        let n_agents = model.n_agents;
        let dn = model.state_dim();
        let noise = model.noise_dim;

        let mut zeta = vec![0.0; n_agents * noise];
        let mut zeta_sq = vec![0.0; n_agents];
        for i in 0..n_agents {
            let row = cp.z_row(i, dn);
            let out = &mut zeta[i * noise..(i + 1) * noise];
            state.left_mul_sigma(row, out);
            zeta_sq[i] = out.iter().map(|v| v * v).sum();
        }

        let atoms_per_row: usize = state.active_atoms.iter().map(Vec::len).sum();
        let mut jump_coeff = vec![0.0; n_agents * atoms_per_row];
        let mut flow_utility = vec![0.0; n_agents];
        for i in 0..n_agents {
            match mode {
                GeneratorMode::GeneralF => {
                    let ctx = Ctx { t: state.t, x: &state.x, k: &cp.k, ..Default::default() };
                    flow_utility[i] = model.agents[i].flow_utility.eval_checked(&ctx, "u_A")?;
                }
                GeneratorMode::CaraG => {
                    if model.agents[i].risk_aversion().is_none() {
                        return Err(Error::Model(format!(
                            "agent {i} lacks exponential utility; certainty-equivalent generator undefined"
                        )));
                    }
                }
            }
            let mut slot = 0;
            for (l, atoms) in state.active_atoms.iter().enumerate() {
                for atom in atoms {
                    let h = cp.h.get(i, l, atom.h_index);
                    let coeff = match mode {
                        GeneratorMode::GeneralF => h * atom.weight,
                        GeneratorMode::CaraG => {
                            let ra = model.agents[i].risk_aversion().unwrap();
                            let exponent = ra * h;
                            if exponent.abs() > 700.0 {
                                return Err(Error::ExpOverflow {
                                    agent: l,
                                    atom: atom.h_index,
                                    exponent,
                                });
                            }
                            (1.0 - exponent.exp()) * atom.weight / ra
                        }
                    };
                    jump_coeff[i * atoms_per_row + slot] = coeff;
                    slot += 1;
                }
            }
        }

        Ok(ControlEval {
            state,
            mode,
            k: cp.k.clone(),
            y: y.to_vec(),
            zeta,
            zeta_sq,
            jump_coeff,
            flow_utility,
            atoms_per_row,
        })
    }

    pub fn zeta_row(&self, i: usize) -> &[f64] {
        let n = self.state.model.noise_dim;
        &self.zeta[i * n..(i + 1) * n]
    }

    pub fn zeta_sq(&self, i: usize) -> f64 {
        self.zeta_sq[i]
    }

    fn jump_sum(&self, i: usize, a: &[f64]) -> Result<f64> {
        let model = self.state.model;
        let mut total = 0.0;
        let mut slot = 0;
        for (l, atoms) in self.state.active_atoms.iter().enumerate() {
            for atom in atoms {
                let coeff = self.jump_coeff[i * self.atoms_per_row + slot];
                slot += 1;
                if coeff == 0.0 {
                    continue;
                }
                let lambda = model.intensity(l, self.state.t, &self.state.x, a, atom.mark)?;
                total += coeff * lambda;
            }
        }
        Ok(total)
    }

    /// Generator value for agent `i` under joint action `a`. `b_buf` is a
    /// caller-provided scratch vector of length `noise_dim`.
    pub fn generator(&self, i: usize, a: &[f64], b_buf: &mut [f64]) -> Result<f64> {
        let model = self.state.model;
        let (t, x) = (self.state.t, self.state.x.as_slice());
        model.drift_loading_into(t, x, a, b_buf)?;
        let drift: f64 = self.zeta_row(i).iter().zip(b_buf.iter()).map(|(z, b)| z * b).sum();
        let ctx = Ctx { t, x, a, k: &self.k, ..Default::default() };
        let rho = model.agents[i].discount.eval_checked(&ctx, "rho")?;
        match self.mode {
            GeneratorMode::GeneralF => {
                let cost = model.agents[i].cost.eval_checked(&ctx, "c")?;
                Ok(self.flow_utility[i] - cost - rho * self.y[i] + drift + self.jump_sum(i, a)?)
            }
            GeneratorMode::CaraG => {
                let ra = model.agents[i].risk_aversion().unwrap();
                Ok(rho / ra + drift - 0.5 * ra * self.zeta_sq[i] + self.jump_sum(i, a)?)
            }
        }
    }

    /// The principal's running-reward jump bracket at action `a`:
    /// `sum_i sum_l int ((1 - e^{R_A^i h}) / R_A^i + h) dEta^{l,a}`.
    /// Only defined in certainty-equivalent mode.
    pub fn principal_jump_bracket(&self, cp: &ControlPoint, a: &[f64]) -> Result<f64> {
        debug_assert_eq!(self.mode, GeneratorMode::CaraG);
        let model = self.state.model;
        let mut total = 0.0;
        for i in 0..model.n_agents {
            let mut slot = 0;
            for (l, atoms) in self.state.active_atoms.iter().enumerate() {
                for atom in atoms {
                    let cara_coeff = self.jump_coeff[i * self.atoms_per_row + slot];
                    slot += 1;
                    let h = cp.h.get(i, l, atom.h_index);
                    let coeff = cara_coeff + h * atom.weight;
                    if coeff == 0.0 {
                        continue;
                    }
                    let lambda =
                        model.intensity(l, self.state.t, &self.state.x, a, atom.mark)?;
                    total += coeff * lambda;
                }
            }
        }
        Ok(total)
    }

    pub fn mode(&self) -> GeneratorMode {
        self.mode
    }

    pub fn payments(&self) -> &[f64] {
        &self.k
    }

    pub fn model(&self) -> &'m ModelSpec {
        self.state.model
    }

    pub fn state(&self) -> &'s StatePoint<'m> {
        self.state
    }
}

/// Continuation-utility generator `f^i` at one point. Convenience wrapper;
/// inner loops use [`StatePoint`] + [`ControlEval`] directly.
pub fn agent_generator_f(
    model: &ModelSpec,
    i: usize,
    t: f64,
    x: &[f64],
    y: &[f64],
    cp: &ControlPoint,
    a: &[f64],
) -> Result<f64> {
    let state = StatePoint::new(model, t, x)?;
    let eval = ControlEval::new(&state, cp, y, GeneratorMode::GeneralF)?;
    let mut b = vec![0.0; model.noise_dim];
    eval.generator(i, a, &mut b)
}

/// Certainty-equivalent generator `g^i` at one point (exponential utility).
pub fn agent_generator_g(
    model: &ModelSpec,
    i: usize,
    t: f64,
    x: &[f64],
    cp: &ControlPoint,
    a: &[f64],
) -> Result<f64> {
    let state = StatePoint::new(model, t, x)?;
    let eval = ControlEval::new(&state, cp, &vec![0.0; model.n_agents], GeneratorMode::CaraG)?;
    let mut b = vec![0.0; model.noise_dim];
    eval.generator(i, a, &mut b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::test_support::unit_jump_model;
    use crate::model::builtin::{builtin_model, ParamMap};
    use crate::model::{Expr, JumpAtom, Slot, Utility};

    fn hm() -> ModelSpec {
        builtin_model("holmstrom_milgrom", &ParamMap::new()).unwrap()
    }

    #[test]
    fn all_terms_vanish_at_zero_control() {
        let model = hm();
        let cp = ControlPoint::zeros(&model);
        let f = agent_generator_f(&model, 0, 0.0, &[0.0], &[0.0], &cp, &[0.0]).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn constant_discount_gives_linear_decay_term() {
        // No jumps, u_A = c = 0, rho = r0: f = -r0 y + z Sigma b.
        let mut model = unit_jump_model(Vec::new(), vec![Expr::zero()], Expr::constant(1.0));
        model.volatility = vec![vec![Expr::constant(2.0)]];
        model.drift_loading = vec![Expr::Linear { slot: Slot::Action, weights: vec![0.5], bias: 0.0 }];
        model.agents[0].discount = Expr::constant(0.3);
        model.agents[0].utility = Utility::Identity;
        let mut cp = ControlPoint::zeros(&model);
        cp.z[0] = 0.7;
        let y = [1.5];
        let a = [0.9];
        let f = agent_generator_f(&model, 0, 0.0, &[0.0], &y, &cp, &a).unwrap();
        // z Sigma b = 0.7 * 2 * 0.45 = 0.63; -rho y = -0.45.
        assert!((f - (0.63 - 0.45)).abs() < 1e-14);
    }

    #[test]
    fn hm_general_generator_matches_term_summing_oracle() {
        let model = hm();
        let mut cp = ControlPoint::zeros(&model);
        cp.z[0] = 0.5;
        let a = [0.5];
        let y = [0.0];
        let f = agent_generator_f(&model, 0, 0.0, &[0.0], &y, &cp, &a).unwrap();
        // Term-summing oracle: u_A - c - rho*y + z*sigma*b with sigma = 1,
        // b = a, rho = -0.5 a^2 (irrelevant at y = 0), no jumps.
        let oracle = 0.0 - 0.0 - (-0.125) * y[0] + 0.5 * 1.0 * 0.5;
        assert!((f - oracle).abs() < 1e-15);
        assert!((f - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cara_generator_zero_control_is_zero() {
        // 1 - e^0 kills the jump term even with atoms present.
        let mut model = unit_jump_model(
            vec![JumpAtom { mark: 1.0, weight: 0.5, inert: false }],
            vec![Expr::coord(Slot::Mark, 1, 0)],
            Expr::constant(1.0),
        );
        model.agents[0].discount = Expr::zero();
        let cp = ControlPoint::zeros(&model);
        let g = agent_generator_g(&model, 0, 0.0, &[0.0], &cp, &[1.0]).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn hm_cara_generator_matches_closed_form() {
        let model = hm();
        for (z, a) in [(0.5, 0.5), (0.3, 0.9), (-0.4, 0.2), (1.0, 0.0)] {
            let mut cp = ControlPoint::zeros(&model);
            cp.z[0] = z;
            let g = agent_generator_g(&model, 0, 0.0, &[0.0], &cp, &[a]).unwrap();
            let closed = -0.5 * a * a + z * a - 0.5 * z * z;
            assert!((g - closed).abs() < 1e-14, "z={z}, a={a}: {g} vs {closed}");
        }
    }

    #[test]
    fn single_atom_log_two_compensation() {
        // h = ln 2 / R_A, z = 0, rho = 0 gives (1 - 2) m / R_A = -m.
        let m = 0.7;
        let model = unit_jump_model(
            vec![JumpAtom { mark: 1.0, weight: m, inert: false }],
            vec![Expr::coord(Slot::Mark, 1, 0)],
            Expr::constant(1.0),
        );
        let mut cp = ControlPoint::zeros(&model);
        cp.h.set(0, 0, 0, std::f64::consts::LN_2);
        let g = agent_generator_g(&model, 0, 0.0, &[0.0], &cp, &[0.5]).unwrap();

        // Oracle: explicit loop over kernel atoms.
        let atoms = crate::model::eta_kernel(&model, 0.0, &[0.0], &[0.5], 0).unwrap();
        let mut oracle = 0.0;
        for atom in &atoms {
            oracle += (1.0 - (1.0f64 * std::f64::consts::LN_2).exp()) * atom.mass / 1.0;
        }
        assert!((g - oracle).abs() < 1e-14);
        assert!((g + m).abs() < 1e-14);
    }

    #[test]
    fn huge_compensation_overflows_loudly() {
        let model = unit_jump_model(
            vec![JumpAtom { mark: 1.0, weight: 1.0, inert: false }],
            vec![Expr::coord(Slot::Mark, 1, 0)],
            Expr::constant(1.0),
        );
        let mut cp = ControlPoint::zeros(&model);
        cp.h.set(0, 0, 0, 800.0);
        let err = agent_generator_g(&model, 0, 0.0, &[0.0], &cp, &[0.5]).unwrap_err();
        assert!(matches!(err, Error::ExpOverflow { .. }));
    }
}
