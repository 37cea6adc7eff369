//! Terminal utility functions with explicit inverses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing terminal utility with a closed-form inverse.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Utility {
    /// `U(x) = x`.
    Identity,
    /// `U(x) = scale * x + shift` with `scale > 0`.
    Affine { scale: f64, shift: f64 },
    /// Exponential utility `U(x) = -exp(-risk_aversion * x)`.
    Cara { risk_aversion: f64 },
}

impl Utility {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Utility::Identity => x,
            Utility::Affine { scale, shift } => scale * x + shift,
            Utility::Cara { risk_aversion } => -(-risk_aversion * x).exp(),
        }
    }

    /// Inverse on the image of the utility.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        match self {
            Utility::Identity => Ok(u),
            Utility::Affine { scale, shift } => {
                if *scale <= 0.0 {
                    return Err(Error::Domain("affine utility needs scale > 0".into()));
                }
                Ok((u - shift) / scale)
            }
            Utility::Cara { risk_aversion } => {
                if u >= 0.0 {
                    return Err(Error::Domain(format!(
                        "exponential utility takes values in (-inf, 0); inverse of {u} undefined"
                    )));
                }
                Ok(-(-u).ln() / risk_aversion)
            }
        }
    }

    pub fn risk_aversion(&self) -> Option<f64> {
        match self {
            Utility::Cara { risk_aversion } => Some(*risk_aversion),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cara_inverse_roundtrip() {
        let u = Utility::Cara { risk_aversion: 2.0 };
        for x in [-3.0, -0.1, 0.0, 0.7, 5.0] {
            let back = u.inverse(u.eval(x)).unwrap();
            assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
        assert!(u.inverse(0.5).is_err());
    }

    #[test]
    fn identity_inverse() {
        let u = Utility::Identity;
        assert_eq!(u.eval(1.25), 1.25);
        assert_eq!(u.inverse(1.25).unwrap(), 1.25);
    }
}
