//! Continuation-utility and certainty-equivalent dynamics: forward
//! accumulation along simulated paths and a backward least-squares Monte
//! Carlo solver.

mod forward;
mod lsmc;
mod regression;
mod transform;
mod value;

pub use forward::{forward_y, YPaths};
pub use lsmc::{solve_backward_lsmc, BsdeSolution, LsmcParams};
pub use regression::StepRegression;
pub use transform::{ce_to_utility, transform_paths, utility_to_ce, TransformDirection};
pub use value::{agent_value_estimate, agent_value_samples};
