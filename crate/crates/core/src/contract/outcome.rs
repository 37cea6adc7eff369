use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// A synthesized contract evaluated along simulated equilibrium paths.
#[derive(Debug, Clone, Serialize)]
pub struct ContractOutcome {
    /// Terminal payments per path and agent.
    pub xi: Vec<Vec<f64>>,
    /// Flow payments per path, step-major, `n_agents` entries per step.
    #[serde(skip)]
    pub chi: Vec<Vec<f64>>,
    /// Initial certainty equivalents the payments were accumulated from.
    pub y0: Vec<f64>,
    /// Estimated agent values with standard errors.
    pub agent_values: Vec<(f64, f64)>,
    /// Estimated principal value with standard error.
    pub principal_value: (f64, f64),
    /// Hash of the value surface the policy came from.
    pub policy_hash: u64,
}

impl ContractOutcome {
    /// CSV of per-path terminal payments.
    pub fn write_xi_csv(&self, out: &mut dyn Write) -> Result<()> {
        write!(out, "path")?;
        for i in 0..self.xi.first().map(Vec::len).unwrap_or(0) {
            write!(out, ",xi{i}")?;
        }
        writeln!(out)?;
        for (p, row) in self.xi.iter().enumerate() {
            write!(out, "{p}")?;
            for v in row {
                write!(out, ",{v:.12e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// One unilateral deviation to test: the agent plays this constant action
/// while everyone else follows the equilibrium feedback.
#[derive(Debug, Clone, Serialize)]
pub struct Deviation {
    pub agent: usize,
    pub action: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationRow {
    pub agent: usize,
    pub label: String,
    pub value: f64,
    pub value_stderr: f64,
    /// Gain relative to the equilibrium value, paired by common random
    /// numbers when runs share a seed.
    pub gain: f64,
    pub gain_stderr: f64,
}

/// Outcome of the incentive-compatibility harness.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    /// Equilibrium values per agent (gain 0 by construction).
    pub equilibrium: Vec<(f64, f64)>,
    pub rows: Vec<DeviationRow>,
    /// No deviation gains more than three combined standard errors.
    pub pass: bool,
    pub n_paths: usize,
    pub seed: u64,
}

impl DeviationReport {
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "agent,label,value,value_stderr,gain,gain_stderr,flagged")?;
        for (i, (v, se)) in self.equilibrium.iter().enumerate() {
            writeln!(out, "{i},equilibrium,{v:.9e},{se:.3e},0,0,false")?;
        }
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{:.9e},{:.3e},{:.9e},{:.3e},{}",
                row.agent,
                row.label,
                row.value,
                row.value_stderr,
                row.gain,
                row.gain_stderr,
                row.gain > (3.0 * row.gain_stderr).max(1e-9)
            )?;
        }
        Ok(())
    }
}

/// Participation check for one agent.
#[derive(Debug, Clone, Serialize)]
pub struct ParticipationCheck {
    pub ok: bool,
    /// Estimated value minus the reservation value.
    pub margin: f64,
    pub stderr: f64,
}
