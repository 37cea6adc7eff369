//! Ridge-regularized polynomial least squares on path cross-sections.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::num::{poly_exponents, poly_features};

/// Least-squares machinery for one time step: total-degree polynomial
/// features of the state, optionally extended with jump-indicator columns.
pub struct StepRegression {
    exponents: Vec<Vec<usize>>,
    n_extra: usize,
    design: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl StepRegression {
    /// `states` is row-major `n_samples x dim`; `extra` columns (jump
    /// indicators) are appended after the polynomial block.
    pub fn new(
        states: &[f64],
        dim: usize,
        degree: usize,
        extra: &[Vec<f64>],
        ridge: f64,
    ) -> Result<Self> {
        if degree < 1 {
            return Err(Error::Regression("basis degree must be at least 1".into()));
        }
        let n = states.len() / dim;
        let exponents = poly_exponents(dim, degree);
        let n_feat = exponents.len() + extra.len();
        if n < n_feat {
            return Err(Error::Regression(format!(
                "rank-deficient regression: {n} samples for {n_feat} features; reduce the basis degree or add paths"
            )));
        }
        let mut design = DMatrix::zeros(n, n_feat);
        let mut buf = vec![0.0; exponents.len()];
        for row in 0..n {
            poly_features(&exponents, &states[row * dim..(row + 1) * dim], &mut buf);
            for (c, v) in buf.iter().enumerate() {
                design[(row, c)] = *v;
            }
            for (e, col) in extra.iter().enumerate() {
                design[(row, exponents.len() + e)] = col[row];
            }
        }
        let mut gram = design.transpose() * &design;
        for i in 0..n_feat {
            gram[(i, i)] += ridge;
        }
        let chol = Cholesky::new(gram).ok_or_else(|| {
            Error::Regression(
                "rank-deficient regression: normal equations not positive definite; reduce the basis degree or add paths"
                    .into(),
            )
        })?;
        Ok(StepRegression { exponents, n_extra: extra.len(), design, chol })
    }

    pub fn n_poly_features(&self) -> usize {
        self.exponents.len()
    }

    /// Fit one target; returns the coefficients and the R^2 diagnostic.
    pub fn fit(&self, target: &[f64]) -> (Vec<f64>, f64) {
        let y = DVector::from_column_slice(target);
        let rhs = self.design.transpose() * &y;
        let coeffs = self.chol.solve(&rhs);
        let fitted = &self.design * &coeffs;
        let mean = y.mean();
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for i in 0..y.len() {
            ss_res += (y[i] - fitted[i]) * (y[i] - fitted[i]);
            ss_tot += (y[i] - mean) * (y[i] - mean);
        }
        let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        (coeffs.as_slice().to_vec(), r2)
    }

    /// Fitted values of the polynomial block only, evaluated on the design
    /// rows (indicator columns contribute via their coefficients separately).
    pub fn predict_poly(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.exponents.len()];
        poly_features(&self.exponents, x, &mut buf);
        buf.iter().zip(coeffs).map(|(f, c)| f * c).sum()
    }

    /// Coefficient of the `j`-th extra column.
    pub fn extra_coeff(&self, coeffs: &[f64], j: usize) -> f64 {
        coeffs[self.exponents.len() + j]
    }

    pub fn n_extra(&self) -> usize {
        self.n_extra
    }
}
