//! Equilibria under proportional-integral feedback.
//!
//! At rest the integrator forces `z₁* = z_ref`. Population 2 then solves its
//! own fixed point with `z₁` frozen, and the integrator state `y₁*` is
//! whatever makes population 1 stationary:
//!
//! ```text
//! z₂* = S₂(I₂* + W₂₁ z_ref + W₂₂ z₂*)
//! y₁* = (I₁* + W₁₁ z_ref + W₁₂ z₂* − S₁⁻¹(z_ref)) / (k_I α)
//! ```

use super::anderson::{self, weighted_norm};
use super::{IterationRecord, SolveError, SolverOptions};
use crate::grid::{Field, FieldPair};
use crate::model::{Controller, NeuralFieldModel};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct PiEquilibriumResult<T> {
    /// Copy of `z_ref`.
    pub z1_star: Field<T>,
    pub z2_star: Field<T>,
    pub y1_star: Field<T>,
    /// Nodewise `S₁⁻¹(z_ref)` used for `y₁*`.
    pub preimage: Field<T>,
    /// Largest nodewise `|S₁(input₁) − z_ref|` at the computed state.
    pub residual_z1: T,
    /// Largest nodewise `|S₂(input₂) − z₂*|`.
    pub residual_z2: T,
    pub iterations: usize,
    pub log: Vec<IterationRecord<T>>,
}

impl<T: Real> PiEquilibriumResult<T> {
    pub fn z_star(&self) -> FieldPair<T> {
        FieldPair::new(self.z1_star.clone(), self.z2_star.clone()).expect("same domain")
    }
}

pub fn solve_pi_equilibrium<T: Real>(
    model: &NeuralFieldModel<T>,
    opts: &SolverOptions<T>,
) -> Result<PiEquilibriumResult<T>, SolveError> {
    opts.validate()?;
    let (kp, ki) = match *model.controller() {
        Controller::ProportionalIntegral { kp, ki } => (kp, ki),
        _ => return Err(SolveError::Unsupported("a proportional-integral controller")),
    };
    let domain = model.domain();
    let n = domain.len();
    let z_ref = model.z_ref().values();
    let s1 = model.activation(0);
    let s2 = model.activation(1);

    let mut preimage = Vec::with_capacity(n);
    let mut unreachable = Vec::new();
    for (a, &z) in z_ref.iter().enumerate() {
        match s1.preimage(z) {
            Some(c) => preimage.push(c),
            None => {
                unreachable.push(a);
                preimage.push(T::nan());
            }
        }
    }
    if !unreachable.is_empty() {
        return Err(SolveError::ReferenceUnreachable { nodes: unreachable });
    }

    // population 2 with z₁ frozen: x₂ ← I₂* + W₂₁ z_ref + W₂₂ S₂(x₂)
    let mut base2 = vec![T::zero(); n];
    model.kernel(1, 0).apply_into(z_ref, &mut base2);
    for (b, &i) in base2.iter_mut().zip(model.input(1).values()) {
        *b += i;
    }
    let weights = domain.weights();
    let w22 = model.kernel(1, 1);
    let mut tmp = vec![T::zero(); n];
    let x0 = base2.clone();
    let outcome = anderson::iterate(x0, weights, opts, |x| {
        let z: Vec<T> = x.iter().map(|&v| s2.eval(v)).collect();
        w22.apply_into(&z, &mut tmp);
        let p: Vec<T> = base2.iter().zip(&tmp).map(|(&b, &t)| b + t).collect();
        let diff: Vec<T> = p.iter().zip(x).map(|(&a, &b)| a - b).collect();
        Ok::<_, SolveError>((p, weighted_norm(weights, &diff)))
    })?;
    if !outcome.converged {
        return Err(SolveError::NonConvergence {
            iterations: outcome.iterations,
            residual: outcome.residual.as_f64(),
        });
    }
    let z2: Vec<T> = outcome.x.iter().map(|&v| s2.eval(v)).collect();

    // population 1: solve for the integrator state
    let mut w11 = vec![T::zero(); n];
    let mut w12 = vec![T::zero(); n];
    model.kernel(0, 0).apply_into(z_ref, &mut w11);
    model.kernel(0, 1).apply_into(&z2, &mut w12);
    let alpha = model.alpha().values();
    let input1 = model.input(0).values();
    let mut y1 = Vec::with_capacity(n);
    for a in 0..n {
        let num = input1[a] + w11[a] + w12[a] - preimage[a];
        let den = ki * alpha[a];
        if den == T::zero() {
            if num.abs() > opts.tol {
                return Err(SolveError::DivisionDegenerate { node: a });
            }
            y1.push(T::zero());
        } else {
            y1.push(num / den);
        }
    }

    // residuals of the stationarity equations at (z_ref, z₂*, y₁*)
    let mut residual_z1 = T::zero();
    let mut residual_z2 = T::zero();
    w22.apply_into(&z2, &mut tmp);
    for a in 0..n {
        let u = -kp * (z_ref[a] - z_ref[a]) - ki * y1[a];
        let arg1 = input1[a] + alpha[a] * u + w11[a] + w12[a];
        residual_z1 = residual_z1.max((s1.eval(arg1) - z_ref[a]).abs());
        let arg2 = base2[a] + tmp[a];
        residual_z2 = residual_z2.max((s2.eval(arg2) - z2[a]).abs());
    }

    let field = |v: Vec<T>| Field::from_values(domain, v).expect("node count");
    Ok(PiEquilibriumResult {
        z1_star: model.z_ref().clone(),
        z2_star: field(z2),
        y1_star: field(y1),
        preimage: field(preimage),
        residual_z1,
        residual_z2,
        iterations: outcome.iterations,
        log: outcome.log,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::activation::Activation;
    use crate::grid::{KernelMatrix, QuadratureRule, SpatialDomain};

    fn domain(n: usize) -> Arc<SpatialDomain<f64>> {
        SpatialDomain::interval(0.0, 1.0, n, QuadratureRule::Trapezoid).unwrap()
    }

    fn pi(kp: f64, ki: f64) -> Controller<f64> {
        Controller::ProportionalIntegral { kp, ki }
    }

    #[test]
    fn decoupled_logistic() {
        let d = domain(21);
        let m = NeuralFieldModel::builder(&d)
            .input(1, Field::from_fn(&d, |r| r[0] - 0.3))
            .z_ref(Field::constant(&d, 0.5))
            .controller(pi(1.0, 2.0))
            .build()
            .unwrap();
        let r = solve_pi_equilibrium(&m, &SolverOptions::default()).unwrap();
        assert!(r.preimage.values().iter().all(|&c| c.abs() < 1e-15));
        assert!(r.y1_star.values().iter().all(|&y| y.abs() < 1e-15));
        let expect = m.apply_rho(&FieldPair::new(Field::zeros(&d), m.input(1).clone()).unwrap());
        assert_eq!(&r.z2_star, expect.second());
        assert_eq!(r.z1_star, *m.z_ref());
    }

    #[test]
    fn unreachable_reference_lists_nodes() {
        let d = domain(5);
        let m = NeuralFieldModel::builder(&d)
            .z_ref(Field::from_values(&d, vec![0.5, 1.5, 0.2, 1.0, -0.1]).unwrap())
            .controller(pi(0.0, 1.0))
            .build()
            .unwrap();
        match solve_pi_equilibrium(&m, &SolverOptions::default()) {
            Err(SolveError::ReferenceUnreachable { nodes }) => assert_eq!(nodes, vec![1, 3, 4]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn requires_pi_controller() {
        let m = NeuralFieldModel::builder(&domain(5)).build().unwrap();
        assert!(matches!(
            solve_pi_equilibrium(&m, &SolverOptions::default()),
            Err(SolveError::Unsupported(_))
        ));
    }

    #[test]
    fn vanishing_alpha_is_degenerate() {
        let d = domain(5);
        let m = NeuralFieldModel::builder(&d)
            .alpha(Field::from_values(&d, vec![1.0, 1.0, 0.0, 1.0, 1.0]).unwrap())
            .input(0, Field::constant(&d, 0.7))
            .z_ref(Field::constant(&d, 0.5))
            .controller(pi(1.0, 1.0))
            .build()
            .unwrap();
        assert_eq!(
            solve_pi_equilibrium(&m, &SolverOptions::default()).unwrap_err(),
            SolveError::DivisionDegenerate { node: 2 }
        );
        // zero numerator at that node is fine
        let m = NeuralFieldModel::builder(&d)
            .alpha(m.alpha().clone())
            .z_ref(Field::constant(&d, 0.5))
            .controller(pi(1.0, 1.0))
            .build()
            .unwrap();
        let r = solve_pi_equilibrium(&m, &SolverOptions::default()).unwrap();
        assert_eq!(r.y1_star.values()[2], 0.0);
    }

    #[test]
    fn flat_clamp_uses_plateau_midpoint() {
        let d = domain(5);
        let m = NeuralFieldModel::builder(&d)
            .activation(0, Activation::clamp(1.0, 0.0, 1.0))
            .z_ref(Field::constant(&d, 0.25))
            .controller(pi(0.0, 1.0))
            .build()
            .unwrap();
        let r = solve_pi_equilibrium(&m, &SolverOptions::default()).unwrap();
        assert!(r.preimage.values().iter().all(|&c| (c - 0.25).abs() < 1e-12));
        assert!(r.y1_star.values().iter().all(|&y| (y + 0.25).abs() < 1e-12));
    }

    #[test]
    fn coupled_model_is_stationary() {
        let d = domain(41);
        let g = |amp: f64, w: f64| KernelMatrix::assemble(&d, |a, b| amp * (-(a[0] - b[0]).powi(2) / (w * w)).exp()).unwrap();
        let m = NeuralFieldModel::builder(&d)
            .kernel(0, 0, g(1.0, 0.2))
            .kernel(0, 1, g(-1.5, 0.3))
            .kernel(1, 0, g(2.0, 0.2))
            .kernel(1, 1, g(-0.7, 0.1))
            .input(0, Field::constant(&d, 0.1))
            .input(1, Field::from_fn(&d, |r| 0.3 * r[0]))
            .alpha(Field::from_fn(&d, |r| 0.5 + r[0]))
            .z_ref(Field::from_fn(&d, |r| 0.3 + 0.4 * r[0]))
            .controller(pi(2.0, 0.5))
            .build()
            .unwrap();
        let r = solve_pi_equilibrium(&m, &SolverOptions::default()).unwrap();
        assert!(r.residual_z1 <= 1e-12, "{}", r.residual_z1);
        assert!(r.residual_z2 <= 1e-9, "{}", r.residual_z2);
        // independent check against the stationarity map with z₁ pinned
        let z = r.z_star();
        let arg = m.t_argument(&z);
        let z2 = m.apply_rho(&arg);
        let err = z2
            .second()
            .values()
            .iter()
            .zip(z.second().values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-9);
    }
}
