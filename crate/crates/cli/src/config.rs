//! Strict run configuration: unknown keys are rejected, every optional key
//! has a documented default, and the effective config hashes into every
//! summary file so runs can be reconstructed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pma_core::hjb::{HjbParams, Scheme, SpaceGrid};
use pma_core::model::builtin::builtin_model;
use pma_core::model::{content_hash_of, validate, ModelSpec};
use pma_core::nash::{BrParams, OptParams};
use pma_core::sim::TimeGrid;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grids: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Name of a built-in model family.
    #[serde(default)]
    pub builtin: Option<String>,
    /// Parameter overrides for the built-in family.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Path to a full model spec in the canonical JSON form; mutually
    /// exclusive with `builtin`.
    #[serde(default)]
    pub spec_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Space box; defaults to the model's declared state box.
    #[serde(default)]
    pub space_lo: Option<Vec<f64>>,
    #[serde(default)]
    pub space_hi: Option<Vec<f64>>,
    /// Nodes per dimension; default 101 each.
    #[serde(default)]
    pub space_nodes: Option<Vec<usize>>,
    /// Backward time steps; default 100.
    #[serde(default)]
    pub time_steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// "explicit" or "imex".
    pub scheme: String,
    pub cfl_factor: f64,
    pub z_max: f64,
    pub h_max: f64,
    pub k_max: f64,
    pub optimizer_tol: f64,
    pub optimizer_budget: usize,
    pub br_tol: f64,
    pub br_max_sweeps: usize,
    pub basis_degree: usize,
    pub ridge: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            scheme: "imex".into(),
            cfl_factor: 0.45,
            z_max: 4.0,
            h_max: 4.0,
            k_max: 4.0,
            optimizer_tol: 1e-6,
            optimizer_budget: 400_000,
            br_tol: 1e-6,
            br_max_sweeps: 60,
            basis_degree: 2,
            ridge: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub n_paths: usize,
    pub seed: u64,
    /// Simulation time steps.
    pub sim_steps: usize,
    /// Constant joint action for `simulate`; defaults to the action-box
    /// center.
    pub policy: Option<Vec<f64>>,
    /// Also compute reweighted base-measure estimates in `simulate`.
    pub reweight: bool,
    /// Deviation grid points per agent coordinate for `verify`; 0 rejects.
    pub deviation_grid: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            n_paths: 10_000,
            seed: 7,
            sim_steps: 100,
            policy: None,
            reweight: false,
            deviation_grid: 9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), workers: 0 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)?;
        Ok(config)
    }

    /// Hash of the effective configuration (after CLI overrides).
    pub fn hash(&self) -> u64 {
        content_hash_of(&serde_json::to_string(self).expect("config serializes"))
    }

    /// Build and validate the model.
    pub fn build_model(&self) -> anyhow::Result<ModelSpec> {
        let model = match (&self.model.builtin, &self.model.spec_path) {
            (Some(name), None) => builtin_model(name, &self.model.params)?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    anyhow::anyhow!("cannot read model spec {}: {e}", path.display())
                })?;
                let model: ModelSpec = serde_json::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("model spec {}: {e}", path.display()))?;
                let report = validate(&model)?;
                if !report.is_empty() {
                    anyhow::bail!(
                        "model failed validation with {} violation(s); first: {}",
                        report.violations.len(),
                        report.violations[0]
                    );
                }
                model
            }
            (Some(_), Some(_)) => {
                anyhow::bail!("model section: set either `builtin` or `spec_path`, not both")
            }
            (None, None) => anyhow::bail!("model section: one of `builtin` or `spec_path` required"),
        };
        Ok(model)
    }

    pub fn space_grid(&self, model: &ModelSpec) -> anyhow::Result<SpaceGrid> {
        let lo = self.grids.space_lo.clone().unwrap_or_else(|| model.state_lo.clone());
        let hi = self.grids.space_hi.clone().unwrap_or_else(|| model.state_hi.clone());
        let nodes = self
            .grids
            .space_nodes
            .clone()
            .unwrap_or_else(|| vec![101; model.state_dim()]);
        Ok(SpaceGrid::new(lo, hi, nodes)?)
    }

    pub fn time_grid(&self, model: &ModelSpec) -> anyhow::Result<TimeGrid> {
        Ok(TimeGrid::new(model.horizon, self.grids.time_steps.unwrap_or(100))?)
    }

    pub fn sim_grid(&self, model: &ModelSpec) -> anyhow::Result<TimeGrid> {
        Ok(TimeGrid::new(model.horizon, self.experiment.sim_steps)?)
    }

    pub fn br_params(&self) -> BrParams {
        BrParams {
            tol: self.solver.br_tol,
            max_sweeps: self.solver.br_max_sweeps,
            certificate_grid: 101,
        }
    }

    pub fn opt_params(&self) -> OptParams {
        OptParams {
            z_max: self.solver.z_max,
            h_max: self.solver.h_max,
            k_max: self.solver.k_max,
            coord_tol: self.solver.optimizer_tol,
            budget: self.solver.optimizer_budget,
            br: self.br_params(),
            ..OptParams::default()
        }
    }

    pub fn hjb_params(&self) -> anyhow::Result<HjbParams> {
        let scheme = match self.solver.scheme.as_str() {
            "explicit" => Scheme::Explicit,
            "imex" => Scheme::ImexDiffusion,
            other => anyhow::bail!("solver.scheme must be \"explicit\" or \"imex\", got {other:?}"),
        };
        Ok(HjbParams { scheme, cfl_factor: self.solver.cfl_factor, opt: self.opt_params() })
    }
}
