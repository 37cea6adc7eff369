use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid on `[0, horizon]` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Domain("time grid needs at least one step".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_k`, exact at both ends.
    pub fn node(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|k| self.node(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_increasing_and_span_the_horizon() {
        let g = TimeGrid::new(0.7, 13).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes.len(), 14);
        assert_eq!(nodes[0], 0.0);
        assert!((nodes[13] - 0.7).abs() < 1e-12);
        for w in nodes.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }
}
