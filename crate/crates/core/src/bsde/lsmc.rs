//! Backward least-squares Monte Carlo solver for the agents' BSDEs.
//!
//! Backward induction on a base-measure bundle: at each step the next-step
//! values are regressed on polynomial features of the state to get the
//! conditional mean, the Brownian covariation gives the diffusion loadings,
//! jump-indicator columns give the per-atom compensations, and the generator
//! is evaluated through the Nash fixed point at the regressed point.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::nash::{
    best_response_fixed_point, BrParams, ControlPoint, ControlPolicy, GeneratorMode, HTable,
};
use crate::num::mean_stderr;
use crate::sim::{PathBundle, SimMeasure};

use super::regression::StepRegression;

#[derive(Debug, Clone, Copy)]
pub struct LsmcParams {
    pub degree: usize,
    pub ridge: f64,
    pub br: BrParams,
}

impl Default for LsmcParams {
    fn default() -> Self {
        LsmcParams { degree: 2, ridge: 1e-8, br: BrParams::default() }
    }
}

/// Output of the backward solver.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub mode: GeneratorMode,
    pub n_paths: usize,
    pub n_nodes: usize,
    pub n_agents: usize,
    /// `[path][node][agent]`.
    pub y: Vec<f64>,
    /// Realized diffusion loadings `[path][step][agent][state_dim]`.
    pub z: Vec<f64>,
    /// Regressed jump compensations, one table per step.
    pub h: Vec<HTable>,
    /// Regression R^2 per step and agent.
    pub r2: Vec<Vec<f64>>,
    /// Time-zero value per agent with a sampling standard error: the mean
    /// over paths of `Y_1 + generator dt` (the regression at the shared
    /// initial state collapses to this mean, but keeps the path spread).
    pub y0: Vec<(f64, f64)>,
    state_dim: usize,
}

impl BsdeSolution {
    pub fn y_at(&self, p: usize, k: usize) -> &[f64] {
        let base = (p * self.n_nodes + k) * self.n_agents;
        &self.y[base..base + self.n_agents]
    }

    pub fn z_at(&self, p: usize, k: usize, i: usize) -> &[f64] {
        let dn = self.state_dim;
        let base = ((p * (self.n_nodes - 1) + k) * self.n_agents + i) * dn;
        &self.z[base..base + dn]
    }

    /// CSV export: `(path, node, Y components, |Z| per agent, R^2)`.
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        write!(out, "path,node")?;
        for i in 0..self.n_agents {
            write!(out, ",y{i}")?;
        }
        for i in 0..self.n_agents {
            write!(out, ",z_norm{i}")?;
        }
        writeln!(out, ",r2")?;
        for p in 0..self.n_paths {
            for k in 0..self.n_nodes {
                write!(out, "{p},{k}")?;
                for v in self.y_at(p, k) {
                    write!(out, ",{v:.12e}")?;
                }
                let step = k.min(self.n_nodes - 2);
                for i in 0..self.n_agents {
                    let norm: f64 =
                        self.z_at(p, step, i).iter().map(|z| z * z).sum::<f64>().sqrt();
                    write!(out, ",{norm:.12e}")?;
                }
                let r2 = if k < self.r2.len() { self.r2[k][0] } else { 1.0 };
                writeln!(out, ",{r2:.6}")?;
            }
        }
        Ok(())
    }
}

/// Solve the backward equation with the given terminal values (one vector
/// per path).
pub fn solve_backward_lsmc(
    model: &ModelSpec,
    terminal: &[Vec<f64>],
    chi: &dyn ControlPolicy,
    bundle: &PathBundle,
    mode: GeneratorMode,
    params: &LsmcParams,
) -> Result<BsdeSolution> {
    if bundle.measure != SimMeasure::Base {
        return Err(Error::Regression(
            "backward solver expects a base-measure bundle".into(),
        ));
    }
    if terminal.len() != bundle.n_paths {
        return Err(Error::Regression("terminal data must cover every path".into()));
    }
    let n_paths = bundle.n_paths;
    let n_nodes = bundle.n_nodes();
    let steps = bundle.grid.steps;
    let dt = bundle.grid.dt();
    let n_agents = model.n_agents;
    let dn = model.state_dim();
    let noise = model.noise_dim;
    let atom_counts = model.active_atom_counts();
    let total_atoms: usize = atom_counts.iter().sum();

    let mut y = vec![0.0; n_paths * n_nodes * n_agents];
    let mut z = vec![0.0; n_paths * steps * n_agents * dn];
    let mut h_tables = Vec::with_capacity(steps);
    let mut r2 = vec![vec![0.0; n_agents]; steps];
    let mut cond_mean_0 = vec![0.0; n_paths * n_agents];

    for (p, term) in terminal.iter().enumerate() {
        let base = (p * n_nodes + steps) * n_agents;
        y[base..base + n_agents].copy_from_slice(term);
    }

    for k in (0..steps).rev() {
        let t = bundle.grid.node(k);

        // Cross-section of states and jump indicators at this step.
        let mut states = vec![0.0; n_paths * dn];
        for p in 0..n_paths {
            states[p * dn..(p + 1) * dn].copy_from_slice(bundle.state(p, k));
        }
        let mut indicators: Vec<Vec<f64>> = vec![vec![0.0; n_paths]; total_atoms];
        if total_atoms > 0 {
            for p in 0..n_paths {
                for event in bundle.jumps(p).iter().filter(|e| e.step == k) {
                    if let Some(j) = model.active_atom_index(event.agent, event.mark_index) {
                        let offset: usize = atom_counts[..event.agent].iter().sum();
                        indicators[offset + j][p] += 1.0;
                    }
                }
            }
        }

        let reg = StepRegression::new(&states, dn, params.degree, &indicators, params.ridge)?;

        // Regress next-step values and covariations per agent.
        let mut cond_mean = vec![0.0; n_paths * n_agents];
        let mut h_step = HTable::zeros(model);
        let mut zeta = vec![0.0; n_paths * n_agents * noise];
        for i in 0..n_agents {
            let next: Vec<f64> = (0..n_paths)
                .map(|p| y[(p * n_nodes + k + 1) * n_agents + i])
                .collect();
            let (coeffs, r2_i) = reg.fit(&next);
            r2[k][i] = r2_i;
            for p in 0..n_paths {
                cond_mean[p * n_agents + i] =
                    reg.predict_poly(&coeffs, &states[p * dn..(p + 1) * dn]);
            }
            // Jump compensations from indicator coefficients. Forward, the
            // general mode adds +H per jump and the cara mode subtracts it.
            let mut offset = 0;
            for (l, &count) in atom_counts.iter().enumerate() {
                for j in 0..count {
                    let coeff = reg.extra_coeff(&coeffs, offset + j);
                    let h_val = match mode {
                        GeneratorMode::GeneralF => coeff,
                        GeneratorMode::CaraG => -coeff,
                    };
                    h_step.set(i, l, j, h_val);
                }
                offset += count;
            }
            // Brownian covariation: E[Y_{k+1} dW_c] / dt. Centering by the
            // conditional mean leaves the expectation unchanged and strips
            // the dominant noise term from the regression target.
            for c in 0..noise {
                let target: Vec<f64> = (0..n_paths)
                    .map(|p| {
                        let resid = y[(p * n_nodes + k + 1) * n_agents + i]
                            - cond_mean[p * n_agents + i];
                        resid * bundle.increment(p, k)[c]
                    })
                    .collect();
                let (zc, _) = reg.fit(&target);
                for p in 0..n_paths {
                    zeta[(p * n_agents + i) * noise + c] =
                        reg.predict_poly(&zc, &states[p * dn..(p + 1) * dn]) / dt;
                }
            }
        }

        // Per path: map zeta back to z through the right pseudo-inverse of
        // Sigma, then advance Y with the generator at the regressed point.
        let updates: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let x = bundle.state(p, k);
                let sigma = model.sigma_at(t, x)?;
                let z_rows = zeta_to_z(&sigma, &zeta[p * n_agents * noise..(p + 1) * n_agents * noise], dn, noise, n_agents)?;
                let mut cp = ControlPoint {
                    z: z_rows.clone(),
                    h: h_step.clone(),
                    k: chi.control_at(t, x).k,
                };
                cp.k.iter_mut().for_each(|v| *v = v.max(0.0));
                let y_hat = &cond_mean[p * n_agents..(p + 1) * n_agents];
                let response = best_response_fixed_point(model, t, x, y_hat, &cp, mode, &params.br)?;
                let y_new: Vec<f64> = (0..n_agents)
                    .map(|i| y_hat[i] + response.generator_values[i] * dt)
                    .collect();
                Ok((y_new, z_rows))
            })
            .collect();

        for (p, update) in updates.into_iter().enumerate() {
            let (y_new, z_rows) = update?;
            let base = (p * n_nodes + k) * n_agents;
            y[base..base + n_agents].copy_from_slice(&y_new);
            let zbase = (p * steps + k) * n_agents * dn;
            z[zbase..zbase + n_agents * dn].copy_from_slice(&z_rows);
        }
        if k == 0 {
            cond_mean_0.copy_from_slice(&cond_mean);
        }
        h_tables.push(h_step);
    }
    h_tables.reverse();

    // Time-zero estimate with an honest spread: at the shared initial state
    // the conditional mean is the plain average of the next-step values, so
    // the per-path samples `Y_1 + generator dt` carry the Monte Carlo noise.
    let y0 = (0..n_agents)
        .map(|i| {
            let samples: Vec<f64> = (0..n_paths)
                .map(|p| {
                    let generator_dt =
                        y[p * n_nodes * n_agents + i] - cond_mean_0[p * n_agents + i];
                    y[(p * n_nodes + 1) * n_agents + i] + generator_dt
                })
                .collect();
            mean_stderr(&samples)
        })
        .collect();

    Ok(BsdeSolution {
        mode,
        n_paths,
        n_nodes,
        n_agents,
        y,
        z,
        h: h_tables,
        r2,
        y0,
        state_dim: dn,
    })
}

/// Solve `z Sigma = zeta` rowwise: `z = zeta Sigma^T (Sigma Sigma^T)^{-1}`.
fn zeta_to_z(sigma: &[f64], zeta: &[f64], dn: usize, noise: usize, n_agents: usize) -> Result<Vec<f64>> {
    let sig = DMatrix::from_row_slice(dn, noise, sigma);
    let gram = &sig * sig.transpose();
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::Regression(
            "volatility matrix is rank deficient; diffusion loadings are not identified".into(),
        )
    })?;
    let mut out = vec![0.0; n_agents * dn];
    for i in 0..n_agents {
        let zeta_i = nalgebra::DVector::from_column_slice(&zeta[i * noise..(i + 1) * noise]);
        let rhs = &sig * zeta_i;
        let sol = chol.solve(&rhs);
        out[i * dn..(i + 1) * dn].copy_from_slice(sol.as_slice());
    }
    Ok(out)
}
