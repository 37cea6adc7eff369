use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Jump-compensation table: one scalar per (agent i, agent l, active atom of
/// agent l's jump measure). Inert atoms carry no entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HTable {
    n_agents: usize,
    /// Active atom count per source agent l.
    counts: Vec<usize>,
    /// Offset of agent l's block within one row.
    offsets: Vec<usize>,
    /// Row-major: values[i * row + offsets[l] + j].
    values: Vec<f64>,
}

impl HTable {
    pub fn zeros(model: &ModelSpec) -> Self {
        let counts = model.active_atom_counts();
        let mut offsets = Vec::with_capacity(counts.len());
        let mut total = 0;
        for c in &counts {
            offsets.push(total);
            total += c;
        }
        HTable {
            n_agents: model.n_agents,
            counts,
            offsets,
            values: vec![0.0; model.n_agents * total],
        }
    }

    pub fn row_len(&self) -> usize {
        self.offsets.last().map(|o| o + self.counts[self.counts.len() - 1]).unwrap_or(0)
    }

    pub fn atom_count(&self, l: usize) -> usize {
        self.counts[l]
    }

    pub fn get(&self, i: usize, l: usize, j: usize) -> f64 {
        self.values[i * self.row_len() + self.offsets[l] + j]
    }

    pub fn set(&mut self, i: usize, l: usize, j: usize, v: f64) {
        let row = self.row_len();
        self.values[i * row + self.offsets[l] + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One candidate principal control: diffusion loadings `z`, jump
/// compensations `h`, and flow payments `k >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    /// Row-major `n_agents x state_dim` matrix.
    pub z: Vec<f64>,
    pub h: HTable,
    pub k: Vec<f64>,
}

impl ControlPoint {
    pub fn zeros(model: &ModelSpec) -> Self {
        ControlPoint {
            z: vec![0.0; model.n_agents * model.state_dim()],
            h: HTable::zeros(model),
            k: vec![0.0; model.n_agents],
        }
    }

    /// Row `i` of the z matrix.
    pub fn z_row(&self, i: usize, state_dim: usize) -> &[f64] {
        &self.z[i * state_dim..(i + 1) * state_dim]
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if self.z.len() != model.n_agents * model.state_dim() {
            return Err(Error::Domain("control point z has the wrong shape".into()));
        }
        if self.h.counts != model.active_atom_counts() || self.h.n_agents != model.n_agents {
            return Err(Error::Domain(
                "control point h table is not indexed by the model's active jump atoms".into(),
            ));
        }
        if self.k.len() != model.n_agents || self.k.iter().any(|k| *k < 0.0) {
            return Err(Error::Domain("flow payments must be componentwise nonnegative".into()));
        }
        Ok(())
    }

    /// Flattened coordinates (z, then h, then k); the coordinate-ascent
    /// optimizer and lexicographic tie-breaking work on this layout.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.z.len() + self.h.len() + self.k.len());
        out.extend_from_slice(&self.z);
        out.extend_from_slice(self.h.values());
        out.extend_from_slice(&self.k);
        out
    }

    pub fn coord(&self, idx: usize) -> f64 {
        let nz = self.z.len();
        let nh = self.h.len();
        if idx < nz {
            self.z[idx]
        } else if idx < nz + nh {
            self.h.values()[idx - nz]
        } else {
            self.k[idx - nz - nh]
        }
    }

    pub fn set_coord(&mut self, idx: usize, v: f64) {
        let nz = self.z.len();
        let nh = self.h.len();
        if idx < nz {
            self.z[idx] = v;
        } else if idx < nz + nh {
            self.h.values_mut()[idx - nz] = v;
        } else {
            self.k[idx - nz - nh] = v;
        }
    }

    pub fn n_coords(&self) -> usize {
        self.z.len() + self.h.len() + self.k.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::{builtin_model, ParamMap};

    #[test]
    fn h_table_layout_matches_active_atoms() {
        let model = builtin_model("market_maker", &ParamMap::new()).unwrap();
        let mut cp = ControlPoint::zeros(&model);
        assert_eq!(cp.h.atom_count(0), 2);
        cp.h.set(0, 0, 1, 0.7);
        assert_eq!(cp.h.get(0, 0, 1), 0.7);
        assert_eq!(cp.h.get(0, 0, 0), 0.0);
        cp.validate(&model).unwrap();
    }

    #[test]
    fn negative_payments_rejected() {
        let model = builtin_model("holmstrom_milgrom", &ParamMap::new()).unwrap();
        let mut cp = ControlPoint::zeros(&model);
        cp.k[0] = -0.5;
        assert!(cp.validate(&model).is_err());
    }

    #[test]
    fn flat_coordinates_roundtrip() {
        let model = builtin_model("capponi_frei", &ParamMap::new()).unwrap();
        let mut cp = ControlPoint::zeros(&model);
        for i in 0..cp.n_coords() {
            cp.set_coord(i, i as f64 + 0.5);
        }
        let flat = cp.flat();
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(cp.coord(i), *v);
        }
    }
}
