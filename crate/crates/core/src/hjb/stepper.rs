//! One backward step of the dynamic-programming scheme.
//!
//! Explicit in the Hamiltonian and jump operator, with central second
//! differences for the diffusion trace (natural boundary rows) and upwind
//! first differences fed into the Hamiltonian: a first central pass locates
//! the argmax drift, then one corrective pass re-evaluates the Hamiltonian
//! with differences biased against that drift. The optional IMEX mode moves
//! the diagonal diffusion into per-axis tridiagonal solves, lifting the
//! parabolic step-size restriction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::nash::{hamiltonian_sup, DriftMode, OptParams};
use crate::num::solve_tridiagonal;
use crate::sim::TimeGrid;

use super::grid::SpaceGrid;
use super::operator::integral_operator_apply;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Fully explicit; subject to the parabolic step-size bound.
    Explicit,
    /// Diagonal diffusion implicit per axis; Hamiltonian, jump operator and
    /// cross-derivatives stay explicit.
    ImexDiffusion,
}

#[derive(Debug, Clone, Copy)]
pub struct HjbParams {
    pub scheme: Scheme,
    /// Safety factor in the step-size bound.
    pub cfl_factor: f64,
    pub opt: OptParams,
}

impl Default for HjbParams {
    fn default() -> Self {
        HjbParams { scheme: Scheme::Explicit, cfl_factor: 0.45, opt: OptParams::default() }
    }
}

/// Per-node argmax data for one time slice.
#[derive(Debug, Clone, Default)]
pub struct SliceControls {
    /// node-major `z` entries (`n_agents * state_dim` each).
    pub z: Vec<f64>,
    /// node-major h-table entries.
    pub h: Vec<f64>,
    /// node-major flow payments (`n_agents` each).
    pub k: Vec<f64>,
    /// node-major Nash responses (`action_dim` each).
    pub a: Vec<f64>,
    /// Hamiltonian value per node.
    pub h_value: Vec<f64>,
    /// Gradient fed to the Hamiltonian per node (`state_dim` each).
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepDiagnostics {
    /// Nodes whose jump operator needed extrapolation outside the box.
    pub extrapolated_nodes: usize,
    /// Nodes whose optimizer budget ran out while improving.
    pub budget_warnings: usize,
    /// Nodes with detected near-ties in the argmax.
    pub near_ties: usize,
}

/// Gradient of `values` at `flat` along every dimension; `mode` selects the
/// stencil per dimension: 0 central, +1 forward, -1 backward. Faces fall
/// back to the available one-sided difference.
fn gradient_at(
    grid: &SpaceGrid,
    values: &[f64],
    flat: usize,
    idx: &[usize],
    mode: &[i8],
    out: &mut [f64],
) {
    for d in 0..grid.dim() {
        let n = grid.nodes[d];
        let dx = grid.spacing(d);
        let stride = grid.stride(d);
        let i = idx[d];
        let v = values[flat];
        out[d] = match mode[d] {
            1 if i + 1 < n => (values[flat + stride] - v) / dx,
            -1 if i > 0 => (v - values[flat - stride]) / dx,
            _ => {
                if i == 0 {
                    (values[flat + stride] - v) / dx
                } else if i + 1 == n {
                    (v - values[flat - stride]) / dx
                } else {
                    (values[flat + stride] - values[flat - stride]) / (2.0 * dx)
                }
            }
        };
    }
}

/// Diffusion trace `1/2 Tr(Sigma Sigma^T D^2 v)` with natural (zero) second
/// differences at faces; cross terms vanish at any face.
fn diffusion_at(
    grid: &SpaceGrid,
    values: &[f64],
    flat: usize,
    idx: &[usize],
    sig_sq: &[f64],
    dim: usize,
    diagonal_only: bool,
) -> f64 {
    let mut total = 0.0;
    for d in 0..dim {
        let coeff = 0.5 * sig_sq[d * dim + d];
        if coeff != 0.0 && idx[d] > 0 && idx[d] + 1 < grid.nodes[d] {
            let stride = grid.stride(d);
            let dx = grid.spacing(d);
            let second =
                (values[flat + stride] - 2.0 * values[flat] + values[flat - stride]) / (dx * dx);
            total += coeff * second;
        }
    }
    if !diagonal_only {
        for d in 0..dim {
            for e in d + 1..dim {
                let coeff = sig_sq[d * dim + e];
                if coeff == 0.0 {
                    continue;
                }
                if idx[d] == 0 || idx[d] + 1 == grid.nodes[d] || idx[e] == 0 || idx[e] + 1 == grid.nodes[e]
                {
                    continue;
                }
                let (sd, se) = (grid.stride(d), grid.stride(e));
                let mixed = (values[flat + sd + se] - values[flat + sd - se]
                    - values[flat - sd + se]
                    + values[flat - sd - se])
                    / (4.0 * grid.spacing(d) * grid.spacing(e));
                total += coeff * mixed;
            }
        }
    }
    total
}

/// Advance the value slice at `t_{k+1}` to `t_k`. `sig_sq` holds the
/// node-major `Sigma Sigma^T` matrices (time-independent by assumption).
pub fn step_backward(
    model: &ModelSpec,
    grid: &SpaceGrid,
    tgrid: &TimeGrid,
    k: usize,
    next: &[f64],
    sig_sq: &[f64],
    params: &HjbParams,
) -> Result<(Vec<f64>, SliceControls, StepDiagnostics)> {
    let dim = grid.dim();
    let dt = tgrid.dt();
    let t = tgrid.node(k);
    let n_total = grid.n_total();
    let dn = model.state_dim();
    debug_assert_eq!(dim, dn);
    let n_agents = model.n_agents;
    let a_dim = model.actions.dim();
    let n_h: usize = model.active_atom_counts().iter().sum::<usize>() * n_agents;

    struct NodeOut {
        explicit_part: f64,
        z: Vec<f64>,
        h: Vec<f64>,
        k: Vec<f64>,
        a: Vec<f64>,
        h_value: f64,
        grad: Vec<f64>,
        extrapolated: bool,
        budget: bool,
        near_tie: bool,
    }

    let nodes: Vec<Result<NodeOut>> = (0..n_total)
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0usize; dim];
            grid.multi_index(flat, &mut idx);
            let mut x = vec![0.0; dim];
            grid.point(flat, &mut x);
            let mut grad = vec![0.0; dim];
            let central = vec![0i8; dim];

            // Pass 1: central differences locate the argmax drift.
            gradient_at(grid, next, flat, &idx, &central, &mut grad);
            let first = hamiltonian_sup(model, t, &x, DriftMode::Gradient(&grad), &params.opt)?;
            let drift = model.sigma_b(t, &x, &first.action)?;

            // Pass 2: upwind differences against the located drift.
            let mode: Vec<i8> = drift
                .iter()
                .map(|s| if *s > 0.0 { 1 } else if *s < 0.0 { -1 } else { 0 })
                .collect();
            gradient_at(grid, next, flat, &idx, &mode, &mut grad);
            let second = hamiltonian_sup(model, t, &x, DriftMode::Gradient(&grad), &params.opt)?;

            let (jump, extrapolated) =
                integral_operator_apply(model, grid, next, t, &x, next[flat])?;

            let sig_block = &sig_sq[flat * dn * dn..(flat + 1) * dn * dn];
            let explicit_diffusion = match params.scheme {
                Scheme::Explicit => diffusion_at(grid, next, flat, &idx, sig_block, dim, false),
                // Diagonal diffusion is handled implicitly afterwards.
                Scheme::ImexDiffusion => diffusion_cross_only(grid, next, flat, &idx, sig_block, dim),
            };
            let explicit_part = next[flat] + dt * (second.value + explicit_diffusion + jump);

            Ok(NodeOut {
                explicit_part,
                z: second.control.z.clone(),
                h: second.control.h.values().to_vec(),
                k: second.control.k.clone(),
                a: second.action.clone(),
                h_value: second.value,
                grad: grad.clone(),
                extrapolated,
                budget: second.budget_exhausted,
                near_tie: second.near_tie,
            })
        })
        .collect();

    let mut v_new = vec![0.0; n_total];
    let mut controls = SliceControls {
        z: vec![0.0; n_total * n_agents * dn],
        h: vec![0.0; n_total * n_h],
        k: vec![0.0; n_total * n_agents],
        a: vec![0.0; n_total * a_dim],
        h_value: vec![0.0; n_total],
        grad: vec![0.0; n_total * dn],
    };
    let mut diag = StepDiagnostics::default();
    for (flat, node) in nodes.into_iter().enumerate() {
        let node = node?;
        v_new[flat] = node.explicit_part;
        controls.z[flat * n_agents * dn..(flat + 1) * n_agents * dn].copy_from_slice(&node.z);
        if n_h > 0 {
            controls.h[flat * n_h..(flat + 1) * n_h].copy_from_slice(&node.h);
        }
        controls.k[flat * n_agents..(flat + 1) * n_agents].copy_from_slice(&node.k);
        controls.a[flat * a_dim..(flat + 1) * a_dim].copy_from_slice(&node.a);
        controls.h_value[flat] = node.h_value;
        controls.grad[flat * dn..(flat + 1) * dn].copy_from_slice(&node.grad);
        diag.extrapolated_nodes += node.extrapolated as usize;
        diag.budget_warnings += node.budget as usize;
        diag.near_ties += node.near_tie as usize;
    }

    if params.scheme == Scheme::ImexDiffusion {
        for d in 0..dim {
            implicit_axis_solve(grid, &mut v_new, sig_sq, d, dn, dt);
        }
    }

    Ok((v_new, controls, diag))
}

/// Cross-derivative part only: full trace minus the diagonal stencils.
fn diffusion_cross_only(
    grid: &SpaceGrid,
    values: &[f64],
    flat: usize,
    idx: &[usize],
    sig_sq: &[f64],
    dim: usize,
) -> f64 {
    diffusion_at(grid, values, flat, idx, sig_sq, dim, false)
        - diffusion_at(grid, values, flat, idx, sig_sq, dim, true)
}

/// Solve `(I - dt/2 (Sigma Sigma^T)_dd D^2_d) v = rhs` along every grid line
/// of axis `d`. Face rows are identities, which preserves affine data
/// exactly.
fn implicit_axis_solve(grid: &SpaceGrid, v: &mut [f64], sig_sq: &[f64], d: usize, dn: usize, dt: f64) {
    let n = grid.nodes[d];
    let stride = grid.stride(d);
    let dx = grid.spacing(d);
    let n_total = grid.n_total();
    let n_lines = n_total / n;

    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    for line in 0..n_lines {
        // Base flat index of this line: enumerate nodes with axis-d index 0.
        let outer = stride * n;
        let block = line / stride;
        let offset = line % stride;
        let base = block * outer + offset;

        for i in 0..n {
            let flat = base + i * stride;
            let c = 0.5 * sig_sq[flat * dn * dn + d * dn + d];
            let r = dt * c / (dx * dx);
            if i == 0 || i + 1 == n {
                lower[i] = 0.0;
                diag[i] = 1.0;
                upper[i] = 0.0;
            } else {
                lower[i] = -r;
                diag[i] = 1.0 + 2.0 * r;
                upper[i] = -r;
            }
            rhs[i] = v[flat];
        }
        let solved = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        for (i, value) in solved.into_iter().enumerate() {
            v[base + i * stride] = value;
        }
    }
}

/// Parabolic and jump step-size bound, following the configured safety
/// factor. Returns the largest stable `dt`.
pub fn stable_dt(model: &ModelSpec, grid: &SpaceGrid, params: &HjbParams, sig_sq: &[f64]) -> Result<f64> {
    let dn = model.state_dim();
    let n_total = grid.n_total();
    // Largest row sum of Sigma Sigma^T over nodes.
    let mut max_norm = 0.0f64;
    for flat in 0..n_total {
        for r in 0..dn {
            let row: f64 = (0..dn).map(|c| sig_sq[flat * dn * dn + r * dn + c].abs()).sum();
            max_norm = max_norm.max(row);
        }
    }
    // Largest total controlled jump mass over probe states and action
    // corners.
    let mut max_mass = 0.0f64;
    let mut actions = model.actions.corners();
    actions.push(model.actions.center());
    let mut x = vec![0.0; dn];
    for flat in [0, n_total / 2, n_total - 1] {
        grid.point(flat, &mut x);
        for a in &actions {
            let mut mass = 0.0;
            for i in 0..model.n_agents {
                for atom in &model.jumps[i].atoms {
                    mass += model.intensity(i, 0.0, &x, a, atom.mark)? * atom.weight;
                }
            }
            max_mass = max_mass.max(mass);
        }
    }
    let min_dx2 = (0..grid.dim()).map(|d| grid.spacing(d).powi(2)).fold(f64::INFINITY, f64::min);
    let mut bound = f64::INFINITY;
    if params.scheme == Scheme::Explicit && max_norm > 0.0 {
        bound = bound.min(min_dx2 / max_norm);
    }
    if max_mass > 0.0 {
        bound = bound.min(1.0 / max_mass);
    }
    Ok(params.cfl_factor * bound)
}

/// Enforce the step-size bound; the error carries the required step count.
pub fn check_cfl(
    model: &ModelSpec,
    grid: &SpaceGrid,
    tgrid: &TimeGrid,
    params: &HjbParams,
    sig_sq: &[f64],
) -> Result<()> {
    let bound = stable_dt(model, grid, params, sig_sq)?;
    let dt = tgrid.dt();
    if dt > bound {
        let min_steps = (tgrid.horizon / bound).ceil() as usize;
        return Err(Error::CflViolation { dt, required: bound, min_steps });
    }
    Ok(())
}
