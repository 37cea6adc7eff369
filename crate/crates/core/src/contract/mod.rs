//! Contract synthesis from the solved feedback policy and Monte Carlo
//! verification of incentive compatibility and participation.

mod outcome;
mod synthesize;
mod verify;

pub use outcome::{ContractOutcome, Deviation, DeviationReport, DeviationRow, ParticipationCheck};
pub use synthesize::{principal_value, synthesize_contract};
pub use verify::{default_deviations, verify_incentive_compatibility, verify_participation};
