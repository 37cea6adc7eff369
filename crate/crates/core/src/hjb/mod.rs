//! Grid solver for the principal's dynamic-programming equation with
//! nonlocal jump terms, feedback-policy extraction, and an independent
//! FBSDE-based cross-check.

mod fbsde;
mod grid;
mod operator;
mod policy;
mod solve;
mod stepper;
mod surface;

pub use fbsde::{fbsde_crosscheck, FbsdeParams};
pub use grid::SpaceGrid;
pub use operator::{integral_operator_apply, interp_multilinear, interp_with};
pub use policy::{extract_policy, FeedbackPolicy, PolicyQuality};
pub use solve::solve;
pub use stepper::{step_backward, HjbParams, Scheme, SliceControls, StepDiagnostics};
pub use surface::ValueSurface;
