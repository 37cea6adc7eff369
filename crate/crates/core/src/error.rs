use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model error: {0}")]
    Model(String),

    #[error("coefficient `{coefficient}` evaluated to a non-finite value at {probe}")]
    NonFiniteCoefficient { coefficient: String, probe: String },

    #[error("model failed validation: {0} violation(s); first: {1}")]
    Invalid(usize, String),

    #[error("intensity must be positive: agent {agent}, atom {atom} gave {value}")]
    NonPositiveIntensity {
        agent: usize,
        atom: usize,
        value: f64,
    },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("unknown built-in model `{name}`; supported: {supported}")]
    UnknownBuiltin { name: String, supported: String },

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error(
        "per-step jump probability {total:.4} exceeds cap {cap}; refine the time grid (step {step})"
    )]
    JumpProbabilityCap { total: f64, cap: f64, step: usize },

    #[error("best response did not converge after {sweeps} sweeps (residual {residual:.3e})")]
    NonConvergent {
        sweeps: usize,
        residual: f64,
        last_action: Vec<f64>,
    },

    #[error("exp overflow in jump term: agent {agent}, atom {atom}, exponent {exponent:.3e}")]
    ExpOverflow {
        agent: usize,
        atom: usize,
        exponent: f64,
    },

    #[error("regression error: {0}")]
    Regression(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("CFL violation: dt = {dt:.3e} exceeds the stable bound {required:.3e}; use at least {min_steps} time steps or the IMEX scheme")]
    CflViolation {
        dt: f64,
        required: f64,
        min_steps: usize,
    },

    #[error("grid solver limited to state dimension <= 3, got {0}; use the FBSDE solver instead")]
    DimensionGuard(usize),

    #[error("non-finite value surface at time step {step}")]
    NonFiniteSurface { step: usize },

    #[error("Picard iteration diverging: successive values {previous:.4e} -> {current:.4e}")]
    PicardDiverging { previous: f64, current: f64 },

    #[error("verification error: {0}")]
    Verification(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
