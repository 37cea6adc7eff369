//! Backward sweep over the whole horizon.

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sim::TimeGrid;

use super::grid::SpaceGrid;
use super::stepper::{check_cfl, step_backward, HjbParams, StepDiagnostics};
use super::surface::ValueSurface;

/// Solve the principal's dynamic-programming equation on the grid.
///
/// Requires exponential-utility agents, a risk-neutral principal, state
/// dimension at most 3, and time-independent volatility and jump-size maps.
pub fn solve(
    model: &ModelSpec,
    grid: &SpaceGrid,
    tgrid: &TimeGrid,
    params: &HjbParams,
) -> Result<ValueSurface> {
    model.require_cara_risk_neutral()?;
    let dn = model.state_dim();
    if dn > 3 {
        return Err(Error::DimensionGuard(dn));
    }
    if grid.dim() != dn {
        return Err(Error::Domain(format!(
            "grid dimension {} does not match the state dimension {dn}",
            grid.dim()
        )));
    }
    if !grid.contains_strict(&model.initial_state) {
        return Err(Error::Domain(
            "initial state must lie strictly inside the grid box".into(),
        ));
    }
    check_time_independence(model, grid, tgrid)?;

    // Volatility is time-independent here, so the squared diffusion matrix
    // is precomputed per node.
    let n_total = grid.n_total();
    let noise = model.noise_dim;
    let mut sig_sq = vec![0.0; n_total * dn * dn];
    let mut x = vec![0.0; dn];
    for flat in 0..n_total {
        grid.point(flat, &mut x);
        let sigma = model.sigma_at(0.0, &x)?;
        for r in 0..dn {
            for c in 0..dn {
                let mut acc = 0.0;
                for j in 0..noise {
                    acc += sigma[r * noise + j] * sigma[c * noise + j];
                }
                sig_sq[flat * dn * dn + r * dn + c] = acc;
            }
        }
    }

    check_cfl(model, grid, tgrid, params, &sig_sq)?;

    // Terminal slice: the liquidation map, exactly.
    let mut terminal = vec![0.0; n_total];
    for flat in 0..n_total {
        grid.point(flat, &mut x);
        terminal[flat] = model.liquidation(&x)?;
    }

    let steps = tgrid.steps;
    let mut v = vec![Vec::new(); steps + 1];
    v[steps] = terminal;
    let mut controls = vec![None; steps];
    let mut diagnostics = StepDiagnostics::default();

    for k in (0..steps).rev() {
        let next = std::mem::take(&mut v[k + 1]);
        let (slice, ctrl, diag) = step_backward(model, grid, tgrid, k, &next, &sig_sq, params)?;
        if slice.iter().any(|val| !val.is_finite()) {
            return Err(Error::NonFiniteSurface { step: k });
        }
        v[k + 1] = next;
        v[k] = slice;
        controls[k] = Some(ctrl);
        diagnostics.extrapolated_nodes += diag.extrapolated_nodes;
        diagnostics.budget_warnings += diag.budget_warnings;
        diagnostics.near_ties += diag.near_ties;
    }

    Ok(ValueSurface {
        grid: grid.clone(),
        tgrid: *tgrid,
        v,
        controls: controls.into_iter().map(|c| c.expect("filled")).collect(),
        scheme: params.scheme,
        dt_ratio: tgrid.dt(),
        diagnostics,
    })
}

/// The grid solver requires volatility and jump sizes to be time
/// independent; fail loudly instead of freezing them silently.
fn check_time_independence(model: &ModelSpec, grid: &SpaceGrid, tgrid: &TimeGrid) -> Result<()> {
    let times = [0.0, 0.5 * tgrid.horizon, tgrid.horizon];
    let mut x = vec![0.0; grid.dim()];
    for flat in [0, grid.n_total() / 2, grid.n_total() - 1] {
        grid.point(flat, &mut x);
        let reference = model.sigma_at(times[0], &x)?;
        for &t in &times[1..] {
            if model.sigma_at(t, &x)? != reference {
                return Err(Error::Model(
                    "grid solver requires time-independent volatility".into(),
                ));
            }
        }
        for i in 0..model.n_agents {
            for atom in &model.jumps[i].atoms {
                let reference = model.jump_size(i, times[0], &x, atom.mark)?;
                for &t in &times[1..] {
                    if model.jump_size(i, t, &x, atom.mark)? != reference {
                        return Err(Error::Model(
                            "grid solver requires time-independent jump sizes".into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}
