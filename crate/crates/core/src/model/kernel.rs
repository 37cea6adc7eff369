//! The controlled jump kernel on state space: the push-forward of the mark
//! measure through the jump-size map, weighted by the intensity modifier.

use crate::error::{Error, Result};
use crate::model::types::ModelSpec;

/// One atom on R^d of the push-forward kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelAtom {
    /// Index of the mark atom it came from.
    pub mark_index: usize,
    /// Jump size in the agent's outcome block.
    pub size: Vec<f64>,
    /// Mass `lambda(t, x, a, e) * weight`.
    pub mass: f64,
}

/// Atoms of the controlled kernel for agent `i` at `(t, x)` under joint
/// action `a`. Atoms with zero jump size never charge the kernel and are
/// dropped.
pub fn eta_kernel(model: &ModelSpec, t: f64, x: &[f64], a: &[f64], i: usize) -> Result<Vec<KernelAtom>> {
    let spec = &model.jumps[i];
    let mut out = Vec::with_capacity(spec.atoms.len());
    for (j, atom) in spec.atoms.iter().enumerate() {
        let lambda = model.intensity(i, t, x, a, atom.mark)?;
        if lambda <= 0.0 {
            return Err(Error::NonPositiveIntensity { agent: i, atom: j, value: lambda });
        }
        let size = model.jump_size(i, t, x, atom.mark)?;
        if size.iter().all(|s| *s == 0.0) {
            continue;
        }
        out.push(KernelAtom { mark_index: j, size, mass: lambda * atom.weight });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::test_support::unit_jump_model;
    use crate::model::{Expr, JumpAtom, Slot};

    #[test]
    fn dirac_pushforward() {
        // F = unit mass at e = 1, beta = -e, lambda = 2.
        let model = unit_jump_model(
            vec![JumpAtom { mark: 1.0, weight: 1.0, inert: false }],
            vec![Expr::Linear { slot: Slot::Mark, weights: vec![-1.0], bias: 0.0 }],
            Expr::constant(2.0),
        );
        let atoms = eta_kernel(&model, 0.0, &[0.0], &[0.0], 0).unwrap();
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].size, vec![-1.0]);
        assert_eq!(atoms[0].mass, 2.0);
    }

    #[test]
    fn unit_intensity_reproduces_base_weights() {
        let model = unit_jump_model(
            vec![
                JumpAtom { mark: 1.0, weight: 0.25, inert: false },
                JumpAtom { mark: 2.0, weight: 0.75, inert: false },
            ],
            vec![Expr::coord(Slot::Mark, 1, 0)],
            Expr::constant(1.0),
        );
        let atoms = eta_kernel(&model, 0.0, &[0.0], &[0.0], 0).unwrap();
        let masses: Vec<f64> = atoms.iter().map(|a| a.mass).collect();
        assert_eq!(masses, vec![0.25, 0.75]);
    }

    #[test]
    fn pushforward_sum_matches_bruteforce() {
        // Two atoms e in {1, 2}, weights 0.5 each, beta = e^2, lambda = a * e,
        // a = 2: atoms at {1, 4} with masses {1, 2}.
        let model = unit_jump_model(
            vec![
                JumpAtom { mark: 1.0, weight: 0.5, inert: false },
                JumpAtom { mark: 2.0, weight: 0.5, inert: false },
            ],
            vec![Expr::Quadratic { slot: Slot::Mark, quad: vec![1.0], linear: vec![0.0], bias: 0.0 }],
            Expr::Named { name: "kernel_test_lambda_ae".into() },
        );
        crate::model::register_coeff("kernel_test_lambda_ae", |c| c.a[0] * c.e);
        let a = [2.0];
        let atoms = eta_kernel(&model, 0.0, &[0.0], &a, 0).unwrap();

        // Brute-force oracle: loop over mark atoms and accumulate the
        // push-forward masses by target point.
        let mut oracle: Vec<(f64, f64)> = Vec::new();
        for atom in &model.jumps[0].atoms {
            let target = atom.mark * atom.mark;
            let mass = (a[0] * atom.mark) * atom.weight;
            match oracle.iter_mut().find(|(p, _)| *p == target) {
                Some((_, m)) => *m += mass,
                None => oracle.push((target, mass)),
            }
        }
        assert_eq!(atoms.len(), oracle.len());
        for (atom, (target, mass)) in atoms.iter().zip(&oracle) {
            assert_eq!(atom.size[0], *target);
            assert!((atom.mass - mass).abs() < 1e-15);
        }
        assert_eq!(atoms[0].size[0], 1.0);
        assert!((atoms[0].mass - 1.0).abs() < 1e-15);
        assert_eq!(atoms[1].size[0], 4.0);
        assert!((atoms[1].mass - 2.0).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_intensity_identifies_atom() {
        let model = unit_jump_model(
            vec![
                JumpAtom { mark: 1.0, weight: 1.0, inert: false },
                JumpAtom { mark: -1.0, weight: 1.0, inert: false },
            ],
            vec![Expr::coord(Slot::Mark, 1, 0)],
            Expr::Linear { slot: Slot::Mark, weights: vec![1.0], bias: 0.0 },
        );
        let err = eta_kernel(&model, 0.0, &[0.0], &[0.0], 0).unwrap_err();
        match err {
            Error::NonPositiveIntensity { atom, .. } => assert_eq!(atom, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zero_size_atoms_are_dropped() {
        let model = unit_jump_model(
            vec![
                JumpAtom { mark: 0.0, weight: 1.0, inert: true },
                JumpAtom { mark: 1.0, weight: 1.0, inert: false },
            ],
            vec![Expr::coord(Slot::Mark, 1, 0)],
            Expr::constant(1.0),
        );
        let atoms = eta_kernel(&model, 0.0, &[0.0], &[0.0], 0).unwrap();
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].mark_index, 1);
        assert!(atoms.iter().all(|a| a.size.iter().any(|s| *s != 0.0)));
    }

    #[test]
    fn mass_scales_linearly_in_lambda() {
        crate::model::register_coeff("kernel_test_lambda_scale", |c| c.a[0]);
        let model = unit_jump_model(
            vec![
                JumpAtom { mark: 1.0, weight: 0.3, inert: false },
                JumpAtom { mark: 2.0, weight: 0.7, inert: false },
            ],
            vec![Expr::coord(Slot::Mark, 1, 0)],
            Expr::Named { name: "kernel_test_lambda_scale".into() },
        );
        let base = eta_kernel(&model, 0.0, &[0.0], &[1.0], 0).unwrap();
        let doubled = eta_kernel(&model, 0.0, &[0.0], &[2.0], 0).unwrap();
        for (b, d) in base.iter().zip(&doubled) {
            assert_eq!(d.mass, 2.0 * b.mass);
        }
    }
}
