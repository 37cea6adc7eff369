//! The agents' game at a point: BSDE generators, the Nash best-response
//! fixed point, and the principal's Hamiltonian.

mod best_response;
mod control;
mod generators;
mod hamiltonian;

pub use best_response::{best_response_fixed_point, f_g_eval, BestResponse, BrParams};
pub use control::{ControlPoint, HTable};
pub use generators::{agent_generator_f, agent_generator_g, ControlEval, GeneratorMode, StatePoint};
pub use hamiltonian::{
    hamiltonian_objective, hamiltonian_sup, k_is_irrelevant, phi_eval, DriftMode,
    HamiltonianResult, OptParams,
};

/// Feedback control policy `(t, x) -> (z, h, k)`.
pub trait ControlPolicy: Sync {
    fn control_at(&self, t: f64, x: &[f64]) -> ControlPoint;
}

/// Constant control point.
#[derive(Debug, Clone)]
pub struct ConstantControl(pub ControlPoint);

impl ControlPolicy for ConstantControl {
    fn control_at(&self, _t: f64, _x: &[f64]) -> ControlPoint {
        self.0.clone()
    }
}

impl<F: Fn(f64, &[f64]) -> ControlPoint + Sync> ControlPolicy for F {
    fn control_at(&self, t: f64, x: &[f64]) -> ControlPoint {
        self(t, x)
    }
}
