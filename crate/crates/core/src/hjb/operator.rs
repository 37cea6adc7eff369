//! The nonlocal jump operator and grid interpolation.

use crate::error::Result;
use crate::model::ModelSpec;

use super::grid::SpaceGrid;

/// Multilinear interpolation of nodal values read through `get`. Points
/// outside the box extrapolate linearly along each axis (the cell weights
/// are simply left unclamped). Returns the value and whether extrapolation
/// occurred.
pub fn interp_with(grid: &SpaceGrid, x: &[f64], get: impl Fn(usize) -> f64) -> (f64, bool) {
    let dim = grid.dim();
    debug_assert_eq!(x.len(), dim);
    assert!(dim <= 8, "interpolation limited to 8 dimensions");
    let mut cells = [0usize; 8];
    let mut weights = [0.0f64; 8];
    let (cell, weight) = (&mut cells[..dim], &mut weights[..dim]);
    let mut extrapolated = false;
    for d in 0..dim {
        let spacing = grid.spacing(d);
        let rel = (x[d] - grid.lo[d]) / spacing;
        let i = (rel.floor() as isize).clamp(0, grid.nodes[d] as isize - 2) as usize;
        cell[d] = i;
        weight[d] = rel - i as f64;
        if weight[d] < -1e-12 || weight[d] > 1.0 + 1e-12 {
            extrapolated = true;
        }
    }
    let mut total = 0.0;
    for corner in 0u32..(1 << dim) {
        let mut w = 1.0;
        let mut flat = 0;
        for d in 0..dim {
            let up = corner >> d & 1 == 1;
            w *= if up { weight[d] } else { 1.0 - weight[d] };
            flat += (cell[d] + up as usize) * grid.stride(d);
        }
        total += w * get(flat);
    }
    (total, extrapolated)
}

/// Multilinear interpolation of a contiguous nodal array.
pub fn interp_multilinear(grid: &SpaceGrid, values: &[f64], x: &[f64]) -> (f64, bool) {
    interp_with(grid, x, |flat| values[flat])
}

/// Apply the jump operator to one point of a value slice:
/// `sum_i sum_atoms w_j (v(x + I_i[beta^i(t, x, e_j)]) - v(x))`
/// with the base mark weights. Shifted points are interpolated, linearly
/// extrapolated outside the box. Returns the value and the extrapolation
/// flag for diagnostics.
pub fn integral_operator_apply(
    model: &ModelSpec,
    grid: &SpaceGrid,
    values: &[f64],
    t: f64,
    x: &[f64],
    v_at_x: f64,
) -> Result<(f64, bool)> {
    let mut total = 0.0;
    let mut extrapolated = false;
    let mut shifted = x.to_vec();
    for i in 0..model.n_agents {
        let block = model.agent_block(i);
        for atom in &model.jumps[i].atoms {
            if atom.weight == 0.0 {
                continue;
            }
            let size = model.jump_size(i, t, x, atom.mark)?;
            if size.iter().all(|s| *s == 0.0) {
                continue;
            }
            shifted.copy_from_slice(x);
            for (r, s) in block.clone().zip(&size) {
                shifted[r] += s;
            }
            let (v_shift, extr) = interp_multilinear(grid, values, &shifted);
            extrapolated |= extr;
            total += atom.weight * (v_shift - v_at_x);
        }
    }
    Ok((total, extrapolated))
}
