use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl SpaceGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != nodes.len() || lo.is_empty() {
            return Err(Error::Domain("grid dimensions are inconsistent".into()));
        }
        for d in 0..lo.len() {
            if !(lo[d] < hi[d]) || !lo[d].is_finite() || !hi[d].is_finite() {
                return Err(Error::Domain(format!(
                    "grid dimension {d}: need finite lo < hi, got [{}, {}]",
                    lo[d], hi[d]
                )));
            }
            if nodes[d] < 5 {
                return Err(Error::Domain(format!(
                    "grid dimension {d}: at least 5 nodes required, got {}",
                    nodes[d]
                )));
            }
        }
        Ok(SpaceGrid { lo, hi, nodes })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn spacing(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / (self.nodes[d] - 1) as f64
    }

    pub fn n_total(&self) -> usize {
        self.nodes.iter().product()
    }

    /// Stride of dimension `d` in the flat row-major layout.
    pub fn stride(&self, d: usize) -> usize {
        self.nodes[d + 1..].iter().product()
    }

    pub fn coord(&self, d: usize, i: usize) -> f64 {
        if i + 1 == self.nodes[d] {
            self.hi[d]
        } else {
            self.lo[d] + i as f64 * self.spacing(d)
        }
    }

    /// Multi-index of a flat node index.
    pub fn multi_index(&self, flat: usize, out: &mut [usize]) {
        let mut rest = flat;
        for d in (0..self.dim()).rev() {
            out[d] = rest % self.nodes[d];
            rest /= self.nodes[d];
        }
    }

    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for d in (0..self.dim()).rev() {
            let i = rest % self.nodes[d];
            rest /= self.nodes[d];
            out[d] = self.coord(d, i);
        }
    }

    pub fn contains_strict(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(d, v)| *v > self.lo[d] && *v < self.hi[d])
    }

    /// True when `x` keeps at least `margin_fraction` of the box width away
    /// from every face.
    pub fn interior_by(&self, x: &[f64], margin_fraction: f64) -> bool {
        x.iter().enumerate().all(|(d, v)| {
            let m = margin_fraction * (self.hi[d] - self.lo[d]);
            *v >= self.lo[d] + m && *v <= self.hi[d] - m
        })
    }
}
