use std::io::Write;

use crate::error::Result;
use crate::sim::grid::TimeGrid;

/// Which measure the bundle was simulated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMeasure {
    /// Driftless dynamics, unit intensity modifiers.
    Base,
    /// Drifted dynamics and thinning intensities from a feedback policy.
    Controlled,
}

/// One realized jump.
#[derive(Debug, Clone)]
pub struct JumpEvent {
    /// Step index `k`: the jump lands in `(t_k, t_{k+1}]`.
    pub step: usize,
    pub agent: usize,
    /// Index into the agent's mark atoms.
    pub mark_index: usize,
    pub mark: f64,
    /// Jump size in the agent's outcome block; all zero for inert atoms.
    pub size: Vec<f64>,
}

/// Simulated paths: states per node, Brownian increments per step, and jump
/// events, reproducible from `(seed, path index)`.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub state_dim: usize,
    pub noise_dim: usize,
    pub n_paths: usize,
    pub measure: SimMeasure,
    pub seed: u64,
    pub(crate) states: Vec<f64>,
    pub(crate) increments: Vec<f64>,
    pub(crate) jumps: Vec<Vec<JumpEvent>>,
}

impl PathBundle {
    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    /// State of path `p` at node `k`.
    pub fn state(&self, p: usize, k: usize) -> &[f64] {
        let d = self.state_dim;
        let base = (p * self.n_nodes() + k) * d;
        &self.states[base..base + d]
    }

    /// Brownian increment of path `p` over step `k`.
    pub fn increment(&self, p: usize, k: usize) -> &[f64] {
        let n = self.noise_dim;
        let base = (p * self.grid.steps + k) * n;
        &self.increments[base..base + n]
    }

    pub fn jumps(&self, p: usize) -> &[JumpEvent] {
        &self.jumps[p]
    }

    pub fn path(&self, p: usize) -> PathView<'_> {
        PathView { bundle: self, path: p }
    }

    pub fn paths(&self) -> impl Iterator<Item = PathView<'_>> {
        (0..self.n_paths).map(move |p| self.path(p))
    }

    /// Columnar CSV export: one row per (path, node) with the state
    /// components and, when supplied, the density.
    pub fn write_csv(&self, out: &mut dyn Write, densities: Option<&DensityPaths>) -> Result<()> {
        write!(out, "path,node,t")?;
        for j in 0..self.state_dim {
            write!(out, ",x{j}")?;
        }
        writeln!(out, ",density")?;
        for p in 0..self.n_paths {
            for k in 0..self.n_nodes() {
                write!(out, "{p},{k},{:.12e}", self.grid.node(k))?;
                for v in self.state(p, k) {
                    write!(out, ",{v:.12e}")?;
                }
                let m = densities.map(|d| d.value(p, k)).unwrap_or(1.0);
                writeln!(out, ",{m:.12e}")?;
            }
        }
        Ok(())
    }
}

/// Read-only view of one path.
#[derive(Clone, Copy)]
pub struct PathView<'a> {
    bundle: &'a PathBundle,
    pub path: usize,
}

impl<'a> PathView<'a> {
    pub fn state(&self, k: usize) -> &'a [f64] {
        self.bundle.state(self.path, k)
    }

    pub fn terminal_state(&self) -> &'a [f64] {
        self.bundle.state(self.path, self.bundle.grid.steps)
    }

    pub fn increment(&self, k: usize) -> &'a [f64] {
        self.bundle.increment(self.path, k)
    }

    pub fn jumps(&self) -> &'a [JumpEvent] {
        self.bundle.jumps(self.path)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.bundle.grid
    }
}

/// Change-of-measure density along each path, one positive value per node.
#[derive(Debug, Clone)]
pub struct DensityPaths {
    pub n_paths: usize,
    pub n_nodes: usize,
    pub(crate) values: Vec<f64>,
}

impl DensityPaths {
    pub fn value(&self, p: usize, k: usize) -> f64 {
        self.values[p * self.n_nodes + k]
    }

    pub fn terminal(&self, p: usize) -> f64 {
        self.value(p, self.n_nodes - 1)
    }
}
