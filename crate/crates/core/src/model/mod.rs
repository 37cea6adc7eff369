//! Problem instances: coefficient expressions, jump measures, agent and
//! principal preferences, validation, and the built-in model families.

pub mod builtin;
mod expr;
mod kernel;
mod types;
mod utility;
mod validate;

pub use builtin::{builtin_model, registry, ModelFamily, ParamMap};
pub use expr::{register_coeff, Ctx, Expr, MarkCase, Slot};
pub use kernel::{eta_kernel, KernelAtom};
pub use types::{
    content_hash_of, ActionBox, ActionSpace, AgentSpec, JumpAtom, JumpSpec, ModelSpec,
    PrincipalSpec,
};
pub use utility::Utility;
pub use validate::{validate, ValidatedModel, ValidationReport, Violation};
