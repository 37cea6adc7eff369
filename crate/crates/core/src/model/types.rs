//! Core model data types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::expr::{Ctx, Expr};
use crate::model::utility::Utility;

/// Box of admissible actions for one agent.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ActionBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ActionBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Joint action space: the product of per-agent boxes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ActionSpace {
    pub agents: Vec<ActionBox>,
}

impl ActionSpace {
    /// Total dimension of the joint action vector.
    pub fn dim(&self) -> usize {
        self.agents.iter().map(ActionBox::dim).sum()
    }

    /// Index range of agent `i`'s coordinates in the joint vector.
    pub fn agent_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.agents[..i].iter().map(ActionBox::dim).sum();
        start..start + self.agents[i].dim()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        if a.len() != self.dim() {
            return false;
        }
        let mut idx = 0;
        for agent in &self.agents {
            for j in 0..agent.dim() {
                if a[idx] < agent.lower[j] - 1e-12 || a[idx] > agent.upper[j] + 1e-12 {
                    return false;
                }
                idx += 1;
            }
        }
        true
    }

    pub fn clamp(&self, a: &mut [f64]) {
        let mut idx = 0;
        for agent in &self.agents {
            for j in 0..agent.dim() {
                a[idx] = a[idx].clamp(agent.lower[j], agent.upper[j]);
                idx += 1;
            }
        }
    }

    /// Center of the joint box.
    pub fn center(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for agent in &self.agents {
            for j in 0..agent.dim() {
                out.push(0.5 * (agent.lower[j] + agent.upper[j]));
            }
        }
        out
    }

    /// All corners of the joint box (2^dim points).
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let (lo, hi) = self.flat_bounds();
        let mut out = Vec::with_capacity(1 << dim);
        for mask in 0u64..(1u64 << dim) {
            let corner: Vec<f64> = (0..dim)
                .map(|j| if mask >> j & 1 == 1 { hi[j] } else { lo[j] })
                .collect();
            out.push(corner);
        }
        out
    }

    pub fn flat_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for agent in &self.agents {
            lo.extend_from_slice(&agent.lower);
            hi.extend_from_slice(&agent.upper);
        }
        (lo, hi)
    }
}

/// One atom of a mark measure.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct JumpAtom {
    pub mark: f64,
    pub weight: f64,
    /// Inert atoms may map to a zero jump size; they never enter the state
    /// kernel but still weigh on the change-of-measure density.
    #[serde(default)]
    pub inert: bool,
}

/// Jump structure for one agent: mark atoms, jump-size map, and the
/// controlled intensity modifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub atoms: Vec<JumpAtom>,
    /// Jump-size map `beta(t, x, e)` into R^d, one expression per component.
    pub size: Vec<Expr>,
    /// Intensity modifier `lambda(t, x, a, e) > 0`.
    pub intensity: Expr,
}

impl JumpSpec {
    pub fn none(outcome_dim: usize) -> Self {
        JumpSpec {
            atoms: Vec::new(),
            size: vec![Expr::zero(); outcome_dim],
            intensity: Expr::constant(1.0),
        }
    }

    pub fn active_atoms(&self) -> impl Iterator<Item = (usize, &JumpAtom)> {
        self.atoms.iter().enumerate().filter(|(_, a)| !a.inert)
    }
}

/// Preferences of one agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    /// Instantaneous discount rate `rho(t, x, k, a)`.
    pub discount: Expr,
    /// Effort cost `c(t, x, a)`.
    pub cost: Expr,
    /// Flow utility of payments `u_A(k)`.
    pub flow_utility: Expr,
    /// Terminal utility with inverse.
    pub utility: Utility,
    /// Reservation value in utility units.
    pub reservation: f64,
}

impl AgentSpec {
    pub fn risk_aversion(&self) -> Option<f64> {
        self.utility.risk_aversion()
    }

    pub fn is_cara(&self) -> bool {
        self.risk_aversion().is_some()
    }
}

/// Preferences of the principal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrincipalSpec {
    /// Liquidation map `L(x)` applied to the terminal state.
    pub liquidation: Expr,
    pub terminal_utility: Utility,
    /// Flow disutility of payments `u_P(k)`.
    pub flow_disutility: Expr,
    /// Discount rate `r(t, x) >= 0`.
    pub discount: Expr,
    /// Risk-neutral flag: identity terminal utility and zero discounting.
    pub risk_neutral: bool,
}

/// A full problem instance.
///
/// Dimensions: `n_agents` agents each steering a `outcome_dim`-dimensional
/// block of the state (total state dimension `n_agents * outcome_dim`),
/// driven by `noise_dim` Brownian components.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n_agents: usize,
    pub outcome_dim: usize,
    pub noise_dim: usize,
    /// Volatility matrix `Sigma(t, x)`, `(n_agents * outcome_dim) x noise_dim`,
    /// row-major. Row block `i` belongs to agent `i`.
    pub volatility: Vec<Vec<Expr>>,
    /// Drift loading `b(t, x, a)` in R^noise_dim; the state drift is `Sigma b`.
    pub drift_loading: Vec<Expr>,
    /// Per-agent jump structure.
    pub jumps: Vec<JumpSpec>,
    pub agents: Vec<AgentSpec>,
    pub principal: PrincipalSpec,
    pub actions: ActionSpace,
    pub initial_state: Vec<f64>,
    /// State box used for validation probes and as the default grid box.
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
    /// Contracting horizon.
    pub horizon: f64,
}

impl ModelSpec {
    /// Total state dimension `d * N`.
    pub fn state_dim(&self) -> usize {
        self.n_agents * self.outcome_dim
    }

    /// Index range of agent `i`'s block in the state vector.
    pub fn agent_block(&self, i: usize) -> std::ops::Range<usize> {
        i * self.outcome_dim..(i + 1) * self.outcome_dim
    }

    /// Evaluate `Sigma(t, x)` into `out` (row-major state_dim x noise_dim).
    pub fn sigma_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let ctx = Ctx { t, x, ..Default::default() };
        let n = self.noise_dim;
        for (r, row) in self.volatility.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                out[r * n + c] = e.eval_checked(&ctx, "Sigma")?;
            }
        }
        Ok(())
    }

    pub fn sigma_at(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim() * self.noise_dim];
        self.sigma_into(t, x, &mut out)?;
        Ok(out)
    }

    /// Evaluate the drift loading `b(t, x, a)`.
    pub fn drift_loading_into(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) -> Result<()> {
        let ctx = Ctx { t, x, a, ..Default::default() };
        for (slot, e) in out.iter_mut().zip(&self.drift_loading) {
            *slot = e.eval_checked(&ctx, "b")?;
        }
        Ok(())
    }

    /// State drift `Sigma(t,x) b(t,x,a)`.
    pub fn sigma_b(&self, t: f64, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let sigma = self.sigma_at(t, x)?;
        let mut b = vec![0.0; self.noise_dim];
        self.drift_loading_into(t, x, a, &mut b)?;
        let mut out = vec![0.0; self.state_dim()];
        for r in 0..self.state_dim() {
            let mut acc = 0.0;
            for c in 0..self.noise_dim {
                acc += sigma[r * self.noise_dim + c] * b[c];
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// Jump-size map of agent `i` at mark `e`.
    pub fn jump_size(&self, i: usize, t: f64, x: &[f64], e: f64) -> Result<Vec<f64>> {
        let ctx = Ctx { t, x, e, ..Default::default() };
        self.jumps[i]
            .size
            .iter()
            .map(|expr| expr.eval_checked(&ctx, "beta"))
            .collect()
    }

    /// Intensity modifier of agent `i` at mark `e` under joint action `a`.
    pub fn intensity(&self, i: usize, t: f64, x: &[f64], a: &[f64], e: f64) -> Result<f64> {
        let ctx = Ctx { t, x, a, e, ..Default::default() };
        self.jumps[i].intensity.eval_checked(&ctx, "lambda")
    }

    /// Number of non-inert atoms per agent; this indexes jump-compensation
    /// tables.
    pub fn active_atom_counts(&self) -> Vec<usize> {
        self.jumps.iter().map(|j| j.active_atoms().count()).collect()
    }

    /// Map a raw mark-atom index of agent `l` to its index among the
    /// non-inert atoms, or `None` for inert atoms.
    pub fn active_atom_index(&self, l: usize, mark_index: usize) -> Option<usize> {
        if self.jumps[l].atoms[mark_index].inert {
            return None;
        }
        Some(
            self.jumps[l].atoms[..mark_index]
                .iter()
                .filter(|a| !a.inert)
                .count(),
        )
    }

    /// Liquidation value `L(x)`.
    pub fn liquidation(&self, x: &[f64]) -> Result<f64> {
        let ctx = Ctx { x, ..Default::default() };
        self.principal.liquidation.eval_checked(&ctx, "L")
    }

    /// Sum over agents of the certainty equivalents of the reservation
    /// values, `sum_i U_A^{i,-1}(R_0^i)`.
    pub fn reservation_certainty_equivalent(&self) -> Result<f64> {
        let mut total = 0.0;
        for agent in &self.agents {
            total += agent.utility.inverse(agent.reservation)?;
        }
        Ok(total)
    }

    /// True when every agent is CARA and the principal is risk-neutral; the
    /// grid solver and Hamiltonian require this.
    pub fn is_cara_risk_neutral(&self) -> bool {
        self.principal.risk_neutral && self.agents.iter().all(AgentSpec::is_cara)
    }

    pub fn require_cara_risk_neutral(&self) -> Result<()> {
        if self.is_cara_risk_neutral() {
            Ok(())
        } else {
            Err(Error::Model(
                "operation requires exponential-utility agents and a risk-neutral principal".into(),
            ))
        }
    }

    /// Canonical serialized form used for golden files and cache keys.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }

    /// FNV-1a hash of the canonical form.
    pub fn content_hash(&self) -> u64 {
        fnv1a(self.canonical_json().as_bytes())
    }
}

/// FNV-1a hash of arbitrary text; used for cache keys and config hashes.
pub fn content_hash_of(text: &str) -> u64 {
    fnv1a(text.as_bytes())
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_space_layout() {
        let space = ActionSpace {
            agents: vec![
                ActionBox { lower: vec![0.0], upper: vec![1.0] },
                ActionBox { lower: vec![-1.0, 0.5], upper: vec![1.0, 2.0] },
            ],
        };
        assert_eq!(space.dim(), 3);
        assert_eq!(space.agent_range(0), 0..1);
        assert_eq!(space.agent_range(1), 1..3);
        assert!(space.contains(&[0.5, 0.0, 1.0]));
        assert!(!space.contains(&[1.5, 0.0, 1.0]));
        let mut a = [2.0, -3.0, 0.0];
        space.clamp(&mut a);
        assert_eq!(a, [1.0, -1.0, 0.5]);
        assert_eq!(space.corners().len(), 8);
    }

    #[test]
    fn active_atom_indexing_skips_inert() {
        let spec = JumpSpec {
            atoms: vec![
                JumpAtom { mark: 1.0, weight: 0.5, inert: false },
                JumpAtom { mark: 2.0, weight: 0.5, inert: true },
                JumpAtom { mark: 3.0, weight: 0.5, inert: false },
            ],
            size: vec![Expr::coord(crate::model::Slot::Mark, 1, 0)],
            intensity: Expr::constant(1.0),
        };
        let model = ModelSpec {
            n_agents: 1,
            outcome_dim: 1,
            noise_dim: 1,
            volatility: vec![vec![Expr::constant(1.0)]],
            drift_loading: vec![Expr::zero()],
            jumps: vec![spec],
            agents: vec![AgentSpec {
                discount: Expr::zero(),
                cost: Expr::zero(),
                flow_utility: Expr::zero(),
                utility: Utility::Cara { risk_aversion: 1.0 },
                reservation: -1.0,
            }],
            principal: PrincipalSpec {
                liquidation: Expr::coord(crate::model::Slot::State, 1, 0),
                terminal_utility: Utility::Identity,
                flow_disutility: Expr::zero(),
                discount: Expr::zero(),
                risk_neutral: true,
            },
            actions: ActionSpace { agents: vec![ActionBox { lower: vec![0.0], upper: vec![1.0] }] },
            initial_state: vec![0.0],
            state_lo: vec![-4.0],
            state_hi: vec![4.0],
            horizon: 1.0,
        };
        assert_eq!(model.active_atom_counts(), vec![2]);
        assert_eq!(model.active_atom_index(0, 0), Some(0));
        assert_eq!(model.active_atom_index(0, 1), None);
        assert_eq!(model.active_atom_index(0, 2), Some(1));
    }
}
