//! Coefficient expressions.
//!
//! Model coefficients are either small structured expressions that a config
//! file can spell out directly (constants, linear, quadratic, and exponential
//! forms) or named function objects registered at runtime. Everything is
//! deterministic in its inputs.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation context for a coefficient: time, state, joint action, flow
/// payment vector, and jump mark.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ctx<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub a: &'a [f64],
    pub k: &'a [f64],
    pub e: f64,
}

impl<'a> Ctx<'a> {
    pub fn slot(&self, slot: Slot) -> SlotView<'a> {
        match slot {
            Slot::Time => SlotView::Scalar(self.t),
            Slot::State => SlotView::Vector(self.x),
            Slot::Action => SlotView::Vector(self.a),
            Slot::Payment => SlotView::Vector(self.k),
            Slot::Mark => SlotView::Scalar(self.e),
        }
    }
}

pub enum SlotView<'a> {
    Scalar(f64),
    Vector(&'a [f64]),
}

impl SlotView<'_> {
    fn dot(&self, weights: &[f64]) -> f64 {
        match self {
            SlotView::Scalar(v) => weights.first().copied().unwrap_or(0.0) * v,
            SlotView::Vector(v) => weights.iter().zip(v.iter()).map(|(w, x)| w * x).sum(),
        }
    }

    fn quad(&self, coeffs: &[f64]) -> f64 {
        match self {
            SlotView::Scalar(v) => coeffs.first().copied().unwrap_or(0.0) * v * v,
            SlotView::Vector(v) => coeffs.iter().zip(v.iter()).map(|(q, x)| q * x * x).sum(),
        }
    }
}

/// Input slot an expression reads from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Time,
    State,
    Action,
    Payment,
    Mark,
}

/// Structured coefficient expression.
///
/// `Linear` computes `weights . v + bias`; `Quadratic` adds `sum_i quad_i v_i^2`;
/// `ExpLinear` computes `scale * exp(weights . v + bias)`. Scalar slots
/// (`time`, `mark`) use the first weight only. `Named` defers to a function
/// object registered with [`register_coeff`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    Const {
        value: f64,
    },
    Linear {
        slot: Slot,
        weights: Vec<f64>,
        #[serde(default)]
        bias: f64,
    },
    Quadratic {
        slot: Slot,
        quad: Vec<f64>,
        #[serde(default)]
        linear: Vec<f64>,
        #[serde(default)]
        bias: f64,
    },
    ExpLinear {
        slot: Slot,
        scale: f64,
        weights: Vec<f64>,
        #[serde(default)]
        bias: f64,
    },
    Sum {
        terms: Vec<Expr>,
    },
    /// Selects a sub-expression by the jump mark; marks compare exactly.
    MarkSwitch {
        cases: Vec<MarkCase>,
        default: Box<Expr>,
    },
    Named {
        name: String,
    },
}

/// One branch of a [`Expr::MarkSwitch`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkCase {
    pub mark: f64,
    pub expr: Expr,
}

impl Expr {
    pub fn zero() -> Self {
        Expr::Const { value: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        Expr::Const { value }
    }

    /// Select one coordinate of a slot.
    pub fn coord(slot: Slot, dim: usize, index: usize) -> Self {
        let mut weights = vec![0.0; dim];
        weights[index] = 1.0;
        Expr::Linear { slot, weights, bias: 0.0 }
    }

    /// `c * v_index^2` on a slot.
    pub fn coord_square(slot: Slot, dim: usize, index: usize, c: f64) -> Self {
        let mut quad = vec![0.0; dim];
        quad[index] = c;
        Expr::Quadratic { slot, quad, linear: vec![0.0; dim], bias: 0.0 }
    }

    pub fn eval(&self, ctx: &Ctx) -> f64 {
        match self {
            Expr::Const { value } => *value,
            Expr::Linear { slot, weights, bias } => ctx.slot(*slot).dot(weights) + bias,
            Expr::Quadratic { slot, quad, linear, bias } => {
                let view = ctx.slot(*slot);
                view.quad(quad) + view.dot(linear) + bias
            }
            Expr::ExpLinear { slot, scale, weights, bias } => {
                scale * (ctx.slot(*slot).dot(weights) + bias).exp()
            }
            Expr::Sum { terms } => terms.iter().map(|t| t.eval(ctx)).sum(),
            Expr::MarkSwitch { cases, default } => cases
                .iter()
                .find(|case| case.mark == ctx.e)
                .map(|case| case.expr.eval(ctx))
                .unwrap_or_else(|| default.eval(ctx)),
            Expr::Named { name } => match lookup_coeff(name) {
                Some(f) => f(ctx),
                None => f64::NAN,
            },
        }
    }

    /// Evaluate and fail hard on non-finite results, naming the coefficient.
    pub fn eval_checked(&self, ctx: &Ctx, role: &str) -> Result<f64> {
        let v = self.eval(ctx);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteCoefficient {
                coefficient: role.to_string(),
                probe: format!("t={}, x={:?}, a={:?}, k={:?}, e={}", ctx.t, ctx.x, ctx.a, ctx.k, ctx.e),
            })
        }
    }

    /// True if the expression can read the given slot.
    pub fn uses_slot(&self, slot: Slot) -> bool {
        match self {
            Expr::Const { .. } => false,
            Expr::Linear { slot: s, weights, .. } => *s == slot && weights.iter().any(|w| *w != 0.0),
            Expr::Quadratic { slot: s, quad, linear, .. } => {
                *s == slot && (quad.iter().any(|w| *w != 0.0) || linear.iter().any(|w| *w != 0.0))
            }
            Expr::ExpLinear { slot: s, weights, .. } => *s == slot && weights.iter().any(|w| *w != 0.0),
            Expr::Sum { terms } => terms.iter().any(|t| t.uses_slot(slot)),
            Expr::MarkSwitch { cases, default } => {
                slot == Slot::Mark
                    || cases.iter().any(|case| case.expr.uses_slot(slot))
                    || default.uses_slot(slot)
            }
            // Conservative: a named coefficient may read anything.
            Expr::Named { .. } => true,
        }
    }
}

type CoeffFn = Arc<dyn Fn(&Ctx) -> f64 + Send + Sync>;

fn coeff_registry() -> &'static RwLock<HashMap<String, CoeffFn>> {
    static REGISTRY: OnceLock<RwLock<HashMap<String, CoeffFn>>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut map: HashMap<String, CoeffFn> = HashMap::new();
        map.insert("zero".into(), Arc::new(|_| 0.0));
        map.insert("one".into(), Arc::new(|_| 1.0));
        RwLock::new(map)
    })
}

/// Register a named coefficient function, replacing any previous binding.
pub fn register_coeff(name: &str, f: impl Fn(&Ctx) -> f64 + Send + Sync + 'static) {
    coeff_registry().write().unwrap().insert(name.to_string(), Arc::new(f));
}

fn lookup_coeff(name: &str) -> Option<CoeffFn> {
    coeff_registry().read().unwrap().get(name).cloned()
}
