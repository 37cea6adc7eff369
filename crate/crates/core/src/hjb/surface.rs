//! The solved value surface: value slices, stored argmax tables, and
//! gradients, with CSV export and a binary cache for resumable runs.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sim::TimeGrid;

use super::grid::SpaceGrid;
use super::operator::interp_multilinear;
use super::stepper::{Scheme, SliceControls, StepDiagnostics};

#[derive(Debug, Clone)]
pub struct ValueSurface {
    pub grid: SpaceGrid,
    pub tgrid: TimeGrid,
    /// Value slices, time-major: `v[k][node]`, `k = 0..=steps`.
    pub v: Vec<Vec<f64>>,
    /// Argmax tables per time step `k = 0..steps` (controls over
    /// `[t_k, t_{k+1})`).
    pub controls: Vec<SliceControls>,
    pub scheme: Scheme,
    pub dt_ratio: f64,
    pub diagnostics: StepDiagnostics,
}

impl ValueSurface {
    pub fn terminal(&self) -> &[f64] {
        &self.v[self.tgrid.steps]
    }

    /// Interpolated value at `(t, x)`.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let k = self.time_slice(t);
        interp_multilinear(&self.grid, &self.v[k], x).0
    }

    pub fn time_slice(&self, t: f64) -> usize {
        let k = (t / self.tgrid.dt()).floor() as isize;
        k.clamp(0, self.tgrid.steps as isize) as usize
    }

    /// Index of the control slice active at time `t`.
    pub fn control_slice(&self, t: f64) -> usize {
        let k = (t / self.tgrid.dt()).floor() as isize;
        k.clamp(0, self.tgrid.steps as isize - 1) as usize
    }

    /// `v(0, X_0)` and the principal value after the reservation shift,
    /// `V_P = v(0, X_0) - sum_i U_A^{i,-1}(R_0^i)`.
    pub fn principal_value(&self, model: &ModelSpec) -> Result<(f64, f64)> {
        let v00 = self.value_at(0.0, &model.initial_state);
        let shift = model.reservation_certainty_equivalent()?;
        Ok((v00, v00 - shift))
    }

    /// Cache key combining the model and grids.
    pub fn cache_key(model: &ModelSpec, grid: &SpaceGrid, tgrid: &TimeGrid) -> u64 {
        let mut text = model.canonical_json();
        text.push_str(&serde_json::to_string(grid).unwrap_or_default());
        text.push_str(&serde_json::to_string(tgrid).unwrap_or_default());
        crate::model::content_hash_of(&text)
    }

    /// CSV export: `(t, x components, v, |Dv|, z entries, k entries)`.
    pub fn write_csv(&self, model: &ModelSpec, out: &mut dyn Write) -> Result<()> {
        let dn = self.grid.dim();
        let n_agents = model.n_agents;
        write!(out, "t")?;
        for d in 0..dn {
            write!(out, ",x{d}")?;
        }
        write!(out, ",v,grad_norm")?;
        for i in 0..n_agents {
            for j in 0..dn {
                write!(out, ",z{i}_{j}")?;
            }
        }
        for i in 0..n_agents {
            write!(out, ",chi{i}")?;
        }
        writeln!(out)?;
        let mut x = vec![0.0; dn];
        for k in 0..=self.tgrid.steps {
            let t = self.tgrid.node(k);
            let ctrl = &self.controls[k.min(self.tgrid.steps - 1)];
            for flat in 0..self.grid.n_total() {
                self.grid.point(flat, &mut x);
                write!(out, "{t:.9}")?;
                for v in &x {
                    write!(out, ",{v:.9}")?;
                }
                let grad = &ctrl.grad[flat * dn..(flat + 1) * dn];
                let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                write!(out, ",{:.12e},{norm:.6e}", self.v[k][flat])?;
                for z in &ctrl.z[flat * n_agents * dn..(flat + 1) * n_agents * dn] {
                    write!(out, ",{z:.9e}")?;
                }
                for kk in &ctrl.k[flat * n_agents..(flat + 1) * n_agents] {
                    write!(out, ",{kk:.9e}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Compact little-endian binary cache.
    pub fn save_cache(&self, path: &Path, key: u64) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"PMASURF1")?;
        f.write_all(&key.to_le_bytes())?;
        let dims = [
            self.grid.dim() as u64,
            self.tgrid.steps as u64,
            self.v[0].len() as u64,
            self.controls[0].z.len() as u64,
            self.controls[0].h.len() as u64,
            self.controls[0].k.len() as u64,
            self.controls[0].a.len() as u64,
        ];
        for d in dims {
            f.write_all(&d.to_le_bytes())?;
        }
        f.write_all(&self.tgrid.horizon.to_le_bytes())?;
        for d in 0..self.grid.dim() {
            f.write_all(&self.grid.lo[d].to_le_bytes())?;
            f.write_all(&self.grid.hi[d].to_le_bytes())?;
            f.write_all(&(self.grid.nodes[d] as u64).to_le_bytes())?;
        }
        let write_slice = |f: &mut std::fs::File, s: &[f64]| -> Result<()> {
            for v in s {
                f.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        };
        for slice in &self.v {
            write_slice(&mut f, slice)?;
        }
        for c in &self.controls {
            write_slice(&mut f, &c.z)?;
            write_slice(&mut f, &c.h)?;
            write_slice(&mut f, &c.k)?;
            write_slice(&mut f, &c.a)?;
            write_slice(&mut f, &c.h_value)?;
            write_slice(&mut f, &c.grad)?;
        }
        Ok(())
    }

    /// Load a cache written by [`Self::save_cache`]; the stored key must
    /// match.
    pub fn load_cache(path: &Path, expected_key: u64, scheme: Scheme) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != b"PMASURF1" {
            return Err(Error::Domain("not a surface cache file".into()));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |f: &mut std::fs::File| -> Result<u64> {
            f.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let key = read_u64(&mut f)?;
        if key != expected_key {
            return Err(Error::Domain(format!(
                "surface cache key {key:#x} does not match the requested problem {expected_key:#x}"
            )));
        }
        let dim = read_u64(&mut f)? as usize;
        let steps = read_u64(&mut f)? as usize;
        let n_total = read_u64(&mut f)? as usize;
        let zn = read_u64(&mut f)? as usize;
        let hn = read_u64(&mut f)? as usize;
        let kn = read_u64(&mut f)? as usize;
        let an = read_u64(&mut f)? as usize;
        let mut f64buf = [0u8; 8];
        let mut read_f64 = |f: &mut std::fs::File| -> Result<f64> {
            f.read_exact(&mut f64buf)?;
            Ok(f64::from_le_bytes(f64buf))
        };
        let horizon = read_f64(&mut f)?;
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut nodes = Vec::new();
        for _ in 0..dim {
            lo.push(read_f64(&mut f)?);
            hi.push(read_f64(&mut f)?);
            let mut nbuf = [0u8; 8];
            f.read_exact(&mut nbuf)?;
            nodes.push(u64::from_le_bytes(nbuf) as usize);
        }
        let grid = SpaceGrid::new(lo, hi, nodes)?;
        let tgrid = TimeGrid::new(horizon, steps)?;
        let read_vec = |f: &mut std::fs::File, len: usize| -> Result<Vec<f64>> {
            let mut out = vec![0.0; len];
            let mut buf = [0u8; 8];
            for v in out.iter_mut() {
                f.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            Ok(out)
        };
        let mut v = Vec::with_capacity(steps + 1);
        for _ in 0..=steps {
            v.push(read_vec(&mut f, n_total)?);
        }
        let mut controls = Vec::with_capacity(steps);
        for _ in 0..steps {
            controls.push(SliceControls {
                z: read_vec(&mut f, zn)?,
                h: read_vec(&mut f, hn)?,
                k: read_vec(&mut f, kn)?,
                a: read_vec(&mut f, an)?,
                h_value: read_vec(&mut f, n_total)?,
                grad: read_vec(&mut f, n_total * dim)?,
            });
        }
        Ok(ValueSurface {
            grid,
            tgrid,
            v,
            controls,
            scheme,
            dt_ratio: 0.0,
            diagnostics: StepDiagnostics::default(),
        })
    }
}
