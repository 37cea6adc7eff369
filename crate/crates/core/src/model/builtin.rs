//! Built-in model families.
//!
//! Each family lives behind the [`ModelFamily`] trait and is registered by
//! name, so configs and the CLI can select a family at runtime and override
//! its parameters.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::expr::{Expr, MarkCase, Slot};
use crate::model::types::{
    ActionBox, ActionSpace, AgentSpec, JumpAtom, JumpSpec, ModelSpec, PrincipalSpec,
};
use crate::model::utility::Utility;
use crate::model::validate::validate;

/// Scalar parameter overrides for a model family.
pub type ParamMap = BTreeMap<String, f64>;

/// A named, parameterized model family.
pub trait ModelFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Supported parameter keys and their defaults.
    fn defaults(&self) -> Vec<(&'static str, f64)>;
    fn build(&self, params: &ParamMap) -> Result<ModelSpec>;
}

/// The registered families, in a stable order.
pub fn registry() -> &'static [&'static dyn ModelFamily] {
    static FAMILIES: [&dyn ModelFamily; 4] = [
        &HolmstromMilgrom,
        &CapponiFrei,
        &MarketMaker,
        &MultiAgentCara,
    ];
    &FAMILIES
}

/// Build a built-in model by name. Unknown names report the supported set;
/// the returned model has passed validation.
pub fn builtin_model(name: &str, params: &ParamMap) -> Result<ModelSpec> {
    let family = registry()
        .iter()
        .find(|f| f.name() == name)
        .ok_or_else(|| Error::UnknownBuiltin {
            name: name.to_string(),
            supported: registry().iter().map(|f| f.name()).collect::<Vec<_>>().join(", "),
        })?;
    let model = family.build(params)?;
    let report = validate(&model)?;
    if !report.is_empty() {
        return Err(Error::Invalid(
            report.violations.len(),
            report.violations[0].to_string(),
        ));
    }
    Ok(model)
}

struct Params<'a> {
    family: &'static str,
    defaults: Vec<(&'static str, f64)>,
    overrides: &'a ParamMap,
}

impl<'a> Params<'a> {
    fn new(family: &'static str, defaults: Vec<(&'static str, f64)>, overrides: &'a ParamMap) -> Result<Self> {
        for key in overrides.keys() {
            if !defaults.iter().any(|(k, _)| k == key) {
                return Err(Error::Parameter(format!(
                    "unknown parameter `{key}` for model `{family}`; supported: {}",
                    defaults.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
                )));
            }
        }
        Ok(Params { family, defaults, overrides })
    }

    fn get(&self, key: &str) -> f64 {
        if let Some(v) = self.overrides.get(key) {
            return *v;
        }
        self.defaults
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("{}: default for `{key}` missing", self.family))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.get(key);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::Parameter(format!(
                "model `{}` requires {key} > 0, got {v}",
                self.family
            )))
        }
    }
}

fn cara_agent(risk_aversion: f64, discount: Expr, reservation_ce: f64) -> AgentSpec {
    AgentSpec {
        discount,
        cost: Expr::zero(),
        flow_utility: Expr::zero(),
        utility: Utility::Cara { risk_aversion },
        reservation: -(-risk_aversion * reservation_ce).exp(),
    }
}

fn risk_neutral_principal(liquidation: Expr) -> PrincipalSpec {
    PrincipalSpec {
        liquidation,
        terminal_utility: Utility::Identity,
        flow_disutility: Expr::zero(),
        discount: Expr::zero(),
        risk_neutral: true,
    }
}

/// Single agent steering the drift of a one-dimensional diffusion, with
/// exponential utility and quadratic effort cost folded into the discount
/// rate.
struct HolmstromMilgrom;

impl ModelFamily for HolmstromMilgrom {
    fn name(&self) -> &'static str {
        "holmstrom_milgrom"
    }

    fn summary(&self) -> &'static str {
        "1 agent, drift control of a scalar diffusion, CARA utility, quadratic effort cost"
    }

    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("kappa", 1.0),
            ("risk_aversion", 1.0),
            ("sigma", 1.0),
            ("horizon", 1.0),
            ("x0", 0.0),
            ("a_max", 2.0),
            ("reservation_ce", 0.0),
            ("box_halfwidth", 4.0),
        ]
    }

    fn build(&self, overrides: &ParamMap) -> Result<ModelSpec> {
        let p = Params::new(self.name(), self.defaults(), overrides)?;
        let kappa = p.positive("kappa")?;
        let ra = p.positive("risk_aversion")?;
        let sigma = p.positive("sigma")?;
        let horizon = p.positive("horizon")?;
        let a_max = p.positive("a_max")?;
        let halfwidth = p.positive("box_halfwidth")?;
        let x0 = p.get("x0");

        // rho(a) = -R_A * kappa a^2 / 2, the multiplicative form of a
        // quadratic effort cost under exponential utility.
        let rho = Expr::coord_square(Slot::Action, 1, 0, -ra * kappa / 2.0);
        Ok(ModelSpec {
            n_agents: 1,
            outcome_dim: 1,
            noise_dim: 1,
            volatility: vec![vec![Expr::constant(sigma)]],
            drift_loading: vec![Expr::Linear {
                slot: Slot::Action,
                weights: vec![1.0 / sigma],
                bias: 0.0,
            }],
            jumps: vec![JumpSpec::none(1)],
            agents: vec![cara_agent(ra, rho, p.get("reservation_ce"))],
            principal: risk_neutral_principal(Expr::coord(Slot::State, 1, 0)),
            actions: ActionSpace {
                agents: vec![ActionBox { lower: vec![0.0], upper: vec![a_max] }],
            },
            initial_state: vec![x0],
            state_lo: vec![x0 - halfwidth],
            state_hi: vec![x0 + halfwidth],
            horizon,
        })
    }
}

/// Single agent steering both the drift and the downward-jump intensity of a
/// scalar output, with exponential utility.
struct CapponiFrei;

impl ModelFamily for CapponiFrei {
    fn name(&self) -> &'static str {
        "capponi_frei"
    }

    fn summary(&self) -> &'static str {
        "1 agent, drift + loss-intensity control of a scalar jump diffusion, CARA utility"
    }

    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("sigma", 1.0),
            ("kappa_u", 1.0),
            ("kappa_lambda", 1.0),
            ("lambda0", 1.0),
            ("loss", 1.0),
            ("jump_weight", 1.0),
            ("lambda_min", 0.5),
            ("lambda_max", 2.0),
            ("u_max", 2.0),
            ("risk_aversion", 1.0),
            ("horizon", 1.0),
            ("x0", 0.0),
            ("reservation_ce", 0.0),
            ("box_halfwidth", 4.0),
        ]
    }

    fn build(&self, overrides: &ParamMap) -> Result<ModelSpec> {
        let p = Params::new(self.name(), self.defaults(), overrides)?;
        let sigma = p.positive("sigma")?;
        let kappa_u = p.positive("kappa_u")?;
        let kappa_l = p.positive("kappa_lambda")?;
        let lambda0 = p.positive("lambda0")?;
        let loss = p.positive("loss")?;
        let weight = p.positive("jump_weight")?;
        let lambda_min = p.positive("lambda_min")?;
        let lambda_max = p.positive("lambda_max")?;
        let ra = p.positive("risk_aversion")?;
        let horizon = p.positive("horizon")?;
        let halfwidth = p.positive("box_halfwidth")?;
        if lambda_min >= lambda_max {
            return Err(Error::Parameter(format!(
                "capponi_frei requires lambda_min < lambda_max, got [{lambda_min}, {lambda_max}]"
            )));
        }
        let x0 = p.get("x0");

        // Action = (u, lambda): drift effort and chosen loss intensity.
        // rho = -R_A (kappa_u u^2/2 + kappa_l (lambda - lambda0)^2/2).
        let rho = Expr::Quadratic {
            slot: Slot::Action,
            quad: vec![-ra * kappa_u / 2.0, -ra * kappa_l / 2.0],
            linear: vec![0.0, ra * kappa_l * lambda0],
            bias: -ra * kappa_l * lambda0 * lambda0 / 2.0,
        };
        Ok(ModelSpec {
            n_agents: 1,
            outcome_dim: 1,
            noise_dim: 1,
            volatility: vec![vec![Expr::constant(sigma)]],
            drift_loading: vec![Expr::Linear {
                slot: Slot::Action,
                weights: vec![1.0 / sigma, 0.0],
                bias: 0.0,
            }],
            jumps: vec![JumpSpec {
                atoms: vec![JumpAtom { mark: loss, weight, inert: false }],
                size: vec![Expr::Linear { slot: Slot::Mark, weights: vec![-1.0], bias: 0.0 }],
                intensity: Expr::coord(Slot::Action, 2, 1),
            }],
            agents: vec![cara_agent(ra, rho, p.get("reservation_ce"))],
            principal: risk_neutral_principal(Expr::coord(Slot::State, 1, 0)),
            actions: ActionSpace {
                agents: vec![ActionBox {
                    lower: vec![0.0, lambda_min],
                    upper: vec![p.positive("u_max")?, lambda_max],
                }],
            },
            initial_state: vec![x0],
            state_lo: vec![x0 - halfwidth],
            state_hi: vec![x0 + halfwidth],
            horizon,
        })
    }
}

/// Single agent quoting two spreads that damp the fill intensities of a
/// two-sided point process, on top of a small diffusive price component.
struct MarketMaker;

impl ModelFamily for MarketMaker {
    fn name(&self) -> &'static str {
        "market_maker"
    }

    fn summary(&self) -> &'static str {
        "1 agent, spread-controlled two-sided fill intensities, CARA utility"
    }

    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("sigma", 0.25),
            ("fill_weight", 1.0),
            ("decay", 0.5),
            ("spread_max", 2.0),
            ("kappa", 1.0),
            ("ref_spread", 1.0),
            ("risk_aversion", 1.0),
            ("horizon", 1.0),
            ("reservation_ce", 0.0),
            ("box_halfwidth", 4.0),
        ]
    }

    fn build(&self, overrides: &ParamMap) -> Result<ModelSpec> {
        let p = Params::new(self.name(), self.defaults(), overrides)?;
        let sigma = p.positive("sigma")?;
        let weight = p.positive("fill_weight")?;
        let decay = p.positive("decay")?;
        let spread_max = p.positive("spread_max")?;
        let kappa = p.positive("kappa")?;
        let ref_spread = p.get("ref_spread");
        let ra = p.positive("risk_aversion")?;
        let horizon = p.positive("horizon")?;
        let halfwidth = p.positive("box_halfwidth")?;

        // Marks 1.0 and 2.0 tag the two sides; each fills one component of
        // the outcome block by one unit.
        let side_a = MarkCase {
            mark: 1.0,
            expr: Expr::ExpLinear { slot: Slot::Action, scale: 1.0, weights: vec![-decay, 0.0], bias: 0.0 },
        };
        let side_b = MarkCase {
            mark: 2.0,
            expr: Expr::ExpLinear { slot: Slot::Action, scale: 1.0, weights: vec![0.0, -decay], bias: 0.0 },
        };
        // rho = -R_A kappa ((da - ref)^2 + (db - ref)^2) / 2.
        let rho = Expr::Quadratic {
            slot: Slot::Action,
            quad: vec![-ra * kappa / 2.0, -ra * kappa / 2.0],
            linear: vec![ra * kappa * ref_spread, ra * kappa * ref_spread],
            bias: -ra * kappa * ref_spread * ref_spread,
        };
        Ok(ModelSpec {
            n_agents: 1,
            outcome_dim: 2,
            noise_dim: 2,
            volatility: vec![
                vec![Expr::constant(sigma), Expr::zero()],
                vec![Expr::zero(), Expr::constant(sigma)],
            ],
            drift_loading: vec![Expr::zero(), Expr::zero()],
            jumps: vec![JumpSpec {
                atoms: vec![
                    JumpAtom { mark: 1.0, weight, inert: false },
                    JumpAtom { mark: 2.0, weight, inert: false },
                ],
                // Component 0 jumps on mark 1 (size 2-e), component 1 on mark 2 (size e-1).
                size: vec![
                    Expr::Linear { slot: Slot::Mark, weights: vec![-1.0], bias: 2.0 },
                    Expr::Linear { slot: Slot::Mark, weights: vec![1.0], bias: -1.0 },
                ],
                intensity: Expr::MarkSwitch {
                    cases: vec![side_a, side_b],
                    default: Box::new(Expr::constant(1.0)),
                },
            }],
            agents: vec![cara_agent(ra, rho, p.get("reservation_ce"))],
            principal: risk_neutral_principal(Expr::Linear {
                slot: Slot::State,
                weights: vec![1.0, 1.0],
                bias: 0.0,
            }),
            actions: ActionSpace {
                agents: vec![ActionBox { lower: vec![0.0, 0.0], upper: vec![spread_max, spread_max] }],
            },
            initial_state: vec![0.0, 0.0],
            state_lo: vec![-halfwidth, -halfwidth],
            state_hi: vec![halfwidth, halfwidth],
            horizon,
        })
    }
}

/// Symmetric team of CARA agents, each steering the drift of its own scalar
/// output through an independent Brownian channel.
struct MultiAgentCara;

impl ModelFamily for MultiAgentCara {
    fn name(&self) -> &'static str {
        "multi_agent_cara"
    }

    fn summary(&self) -> &'static str {
        "N symmetric CARA agents with decoupled drift control, no jumps"
    }

    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("n_agents", 2.0),
            ("kappa", 1.0),
            ("risk_aversion", 1.0),
            ("sigma", 1.0),
            ("horizon", 1.0),
            ("x0", 0.0),
            ("a_max", 2.0),
            ("reservation_ce", 0.0),
            ("box_halfwidth", 4.0),
        ]
    }

    fn build(&self, overrides: &ParamMap) -> Result<ModelSpec> {
        let p = Params::new(self.name(), self.defaults(), overrides)?;
        let n_raw = p.get("n_agents");
        if n_raw < 1.0 || n_raw.fract() != 0.0 {
            return Err(Error::Parameter(format!(
                "multi_agent_cara requires an integer n_agents >= 1, got {n_raw}"
            )));
        }
        let n = n_raw as usize;
        let kappa = p.positive("kappa")?;
        let ra = p.positive("risk_aversion")?;
        let sigma = p.positive("sigma")?;
        let horizon = p.positive("horizon")?;
        let a_max = p.positive("a_max")?;
        let halfwidth = p.positive("box_halfwidth")?;
        let x0 = p.get("x0");

        let volatility: Vec<Vec<Expr>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Expr::constant(sigma) } else { Expr::zero() })
                    .collect()
            })
            .collect();
        let drift_loading: Vec<Expr> = (0..n)
            .map(|j| {
                let mut weights = vec![0.0; n];
                weights[j] = 1.0 / sigma;
                Expr::Linear { slot: Slot::Action, weights, bias: 0.0 }
            })
            .collect();
        let agents: Vec<AgentSpec> = (0..n)
            .map(|i| cara_agent(ra, Expr::coord_square(Slot::Action, n, i, -ra * kappa / 2.0), p.get("reservation_ce")))
            .collect();
        Ok(ModelSpec {
            n_agents: n,
            outcome_dim: 1,
            noise_dim: n,
            volatility,
            drift_loading,
            jumps: vec![JumpSpec::none(1); n],
            agents,
            principal: risk_neutral_principal(Expr::Linear {
                slot: Slot::State,
                weights: vec![1.0; n],
                bias: 0.0,
            }),
            actions: ActionSpace {
                agents: vec![ActionBox { lower: vec![0.0], upper: vec![a_max] }; n],
            },
            initial_state: vec![x0; n],
            state_lo: vec![x0 - halfwidth; n],
            state_hi: vec![x0 + halfwidth; n],
            horizon,
        })
    }
}

#[doc(hidden)]
pub mod test_support {
    use super::*;

    /// Minimal 1-agent CARA model with a caller-supplied jump structure;
    /// used by kernel and simulation tests.
    pub fn unit_jump_model(atoms: Vec<JumpAtom>, size: Vec<Expr>, intensity: Expr) -> ModelSpec {
        ModelSpec {
            n_agents: 1,
            outcome_dim: size.len(),
            noise_dim: 1,
            volatility: (0..size.len())
                .map(|r| vec![if r == 0 { Expr::constant(1.0) } else { Expr::zero() }])
                .collect(),
            drift_loading: vec![Expr::zero()],
            jumps: vec![JumpSpec { atoms, size: size.clone(), intensity }],
            agents: vec![AgentSpec {
                discount: Expr::zero(),
                cost: Expr::zero(),
                flow_utility: Expr::zero(),
                utility: Utility::Cara { risk_aversion: 1.0 },
                reservation: -1.0,
            }],
            principal: risk_neutral_principal(Expr::coord(Slot::State, size.len(), 0)),
            actions: ActionSpace {
                agents: vec![ActionBox { lower: vec![0.0], upper: vec![2.0] }],
            },
            initial_state: vec![0.0; size.len()],
            state_lo: vec![-4.0; size.len()],
            state_hi: vec![4.0; size.len()],
            horizon: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_supported() {
        let err = builtin_model("cox_ross", &ParamMap::new()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("holmstrom_milgrom"));
        assert!(msg.contains("capponi_frei"));
        assert!(msg.contains("market_maker"));
        assert!(msg.contains("multi_agent_cara"));
    }

    #[test]
    fn bad_parameters_rejected() {
        let mut params = ParamMap::new();
        params.insert("risk_aversion".into(), -1.0);
        assert!(matches!(
            builtin_model("holmstrom_milgrom", &params),
            Err(Error::Parameter(_))
        ));
        let mut unknown = ParamMap::new();
        unknown.insert("volatility".into(), 1.0);
        assert!(matches!(
            builtin_model("holmstrom_milgrom", &unknown),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn hm_encodes_quadratic_cost_in_discount() {
        let model = builtin_model("holmstrom_milgrom", &ParamMap::new()).unwrap();
        assert_eq!(model.n_agents, 1);
        assert_eq!(model.state_dim(), 1);
        assert!(model.jumps[0].atoms.is_empty());
        // rho(a) = -R_A kappa a^2/2 with the defaults.
        let ctx = crate::model::Ctx { a: &[0.5], ..Default::default() };
        assert!((model.agents[0].discount.eval(&ctx) + 0.125).abs() < 1e-15);
        // Reservation value has zero certainty equivalent.
        assert_eq!(model.agents[0].reservation, -1.0);
    }

    #[test]
    fn capponi_frei_has_controlled_downward_jumps() {
        let model = builtin_model("capponi_frei", &ParamMap::new()).unwrap();
        let atoms = crate::model::eta_kernel(&model, 0.0, &[0.0], &[0.0, 1.7], 0).unwrap();
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].size, vec![-1.0]);
        assert!((atoms[0].mass - 1.7).abs() < 1e-15);
    }

    #[test]
    fn multi_agent_cara_is_symmetric() {
        let mut params = ParamMap::new();
        params.insert("n_agents".into(), 2.0);
        let model = builtin_model("multi_agent_cara", &params).unwrap();
        assert_eq!(model.n_agents, 2);
        assert_eq!(model.state_dim(), 2);
        assert_eq!(model.noise_dim, 2);
        let ctx = crate::model::Ctx { a: &[0.3, 0.8], ..Default::default() };
        // Agent i's discount depends on its own action only.
        let d0 = model.agents[0].discount.eval(&ctx);
        let d1 = model.agents[1].discount.eval(&ctx);
        assert!((d0 + 0.5 * 0.3 * 0.3).abs() < 1e-15);
        assert!((d1 + 0.5 * 0.8 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn market_maker_sides_fill_their_components() {
        let model = builtin_model("market_maker", &ParamMap::new()).unwrap();
        let a = [0.5, 1.5];
        let atoms = crate::model::eta_kernel(&model, 0.0, &[0.0, 0.0], &a, 0).unwrap();
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].size, vec![1.0, 0.0]);
        assert_eq!(atoms[1].size, vec![0.0, 1.0]);
        // Wider spread damps the fill intensity.
        assert!(atoms[1].mass < atoms[0].mass);
        assert!((atoms[0].mass - (-0.5f64 * 0.5).exp()).abs() < 1e-15);
    }

    #[test]
    fn builtins_validate_and_roundtrip_bit_exactly() {
        for family in registry() {
            let model = builtin_model(family.name(), &ParamMap::new()).unwrap();
            let report = validate(&model).unwrap();
            assert!(report.is_empty(), "{}: {:?}", family.name(), report.violations);
            let s1 = model.canonical_json();
            let back: ModelSpec = serde_json::from_str(&s1).unwrap();
            let s2 = back.canonical_json();
            assert_eq!(s1, s2, "{} does not round-trip", family.name());
        }
    }
}
