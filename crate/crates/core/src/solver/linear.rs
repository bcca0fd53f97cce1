//! Direct solve when both activations are affine.
//!
//! With `S_i(s) = m_i s + c_i` the fixed-point equation `x = 𝒯(x)` becomes
//! the linear system
//!
//! ```text
//! (I + diag(kα m₁, 0) − W diag(m₁, m₂)) x = f − (kα c₁, 0) + W(c₁, c₂)
//! ```
//!
//! on the `2n` stacked node values.

use super::SolveError;
use crate::activation::Activation;
use crate::grid::FieldPair;
use crate::linalg::{DenseMatrix, PivotedQr};
use crate::model::NeuralFieldModel;
use crate::scalar::Real;

const RANK_TOL: f64 = 1e-10;
const RANGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearReport<T> {
    /// Right-hand side lies in the range of the operator.
    pub solvable: bool,
    /// Operator has full numerical rank.
    pub unique: bool,
    pub rank: usize,
    pub dimension: usize,
    /// Solution, or the basic weighted least-squares solution when not
    /// solvable.
    pub x: FieldPair<T>,
    /// `‖A x − b‖` in the pair norm.
    pub residual: T,
    /// `‖b‖` in the pair norm.
    pub rhs_norm: T,
}

fn affine<T: Real>(a: &Activation<T>) -> Option<(T, T)> {
    match *a {
        Activation::Linear { slope, offset } => Some((slope, offset)),
        _ => None,
    }
}

/// Matrix `A` and right-hand side `b` of the affine fixed-point problem, in
/// stacked `[population 1; population 2]` node order.
pub fn linear_system<T: Real>(model: &NeuralFieldModel<T>) -> Result<(DenseMatrix<T>, Vec<T>), SolveError> {
    let (m1, c1) = affine(model.activation(0)).ok_or(SolveError::Unsupported("linear activations"))?;
    let (m2, c2) = affine(model.activation(1)).ok_or(SolveError::Unsupported("linear activations"))?;
    let n = model.domain().len();
    let slopes = [m1, m2];
    let feedback = model.feedback_profile();
    let kalpha = feedback.values();

    let a = DenseMatrix::from_fn(2 * n, 2 * n, |row, col| {
        let (i, ra) = (row / n, row % n);
        let (j, cb) = (col / n, col % n);
        let mut v = -model.kernel(i, j).entry(ra, cb) * slopes[j];
        if row == col {
            v += T::one();
            if i == 0 {
                v += kalpha[ra] * m1;
            }
        }
        v
    });

    let f = model.forcing();
    let [w1, w2] = model.apply_w_raw(&vec![c1; n], &vec![c2; n]);
    let mut b = f.stacked();
    for a in 0..n {
        b[a] += w1[a] - kalpha[a] * c1;
        b[n + a] += w2[a];
    }
    Ok((a, b))
}

/// Factors the affine fixed-point operator with column-pivoted QR in the
/// quadrature-weighted norm and reports solvability and uniqueness.
pub fn solve_linear_case<T: Real>(model: &NeuralFieldModel<T>) -> Result<LinearReport<T>, SolveError> {
    let (a, b) = linear_system(model)?;
    let domain = model.domain();
    let n = domain.len();
    let sqrt_w: Vec<T> = domain.weights().iter().chain(domain.weights()).map(|w| w.sqrt()).collect();

    let scaled = DenseMatrix::from_fn(2 * n, 2 * n, |i, j| sqrt_w[i] * a[(i, j)]);
    let scaled_b: Vec<T> = b.iter().zip(&sqrt_w).map(|(&v, &s)| v * s).collect();
    let qr = PivotedQr::factor(&scaled);
    let rank = qr.rank(T::lit(RANK_TOL));
    let x = qr.solve(&scaled_b, rank);

    let ax = a.mul_vec(&x);
    let r: Vec<T> = ax.iter().zip(&b).map(|(&p, &q)| p - q).collect();
    let norm = |v: &[T]| FieldPair::from_stacked(domain, v).expect("stacked length").pair_norm();
    let residual = norm(&r);
    let rhs_norm = norm(&b);

    Ok(LinearReport {
        solvable: residual <= T::lit(RANGE_TOL) * rhs_norm,
        unique: rank == 2 * n,
        rank,
        dimension: 2 * n,
        x: FieldPair::from_stacked(domain, &x).expect("stacked length"),
        residual,
        rhs_norm,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::{Field, KernelMatrix, QuadratureRule, SpatialDomain};
    use crate::model::Controller;

    fn domain(n: usize) -> Arc<SpatialDomain<f64>> {
        SpatialDomain::interval(0.0, 1.0, n, QuadratureRule::Trapezoid).unwrap()
    }

    #[test]
    fn identity_operator() {
        let d = domain(9);
        let m = NeuralFieldModel::builder(&d)
            .activations(Activation::identity())
            .input(0, Field::from_fn(&d, |r| r[0]))
            .input(1, Field::constant(&d, -2.0))
            .build()
            .unwrap();
        let (a, _) = linear_system(&m).unwrap();
        assert_eq!(a, DenseMatrix::identity(18));
        let rep = solve_linear_case(&m).unwrap();
        assert!(rep.solvable && rep.unique);
        assert!(rep.x.distance(&m.forcing()).unwrap() <= 1e-14);
    }

    #[test]
    fn proportional_gain_scales_first_block() {
        let d = domain(7);
        let m = NeuralFieldModel::builder(&d)
            .activations(Activation::identity())
            .input(0, Field::constant(&d, 3.0))
            .input(1, Field::constant(&d, 1.0))
            .z_ref(Field::constant(&d, 0.5))
            .controller(Controller::Proportional { gain: 1.0 })
            .build()
            .unwrap();
        let rep = solve_linear_case(&m).unwrap();
        let f = m.forcing();
        for a in 0..7 {
            assert!((rep.x.first().values()[a] - f.first().values()[a] / 2.0).abs() < 1e-14);
            assert!((rep.x.second().values()[a] - f.second().values()[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_nonlinear() {
        let m = NeuralFieldModel::builder(&domain(5)).build().unwrap();
        assert!(matches!(solve_linear_case(&m), Err(SolveError::Unsupported(_))));
    }

    #[test]
    fn offsets_enter_right_hand_side() {
        let d = domain(11);
        let k = KernelMatrix::assemble(&d, |a, b| 0.3 * (a[0] - b[0]).cos()).unwrap();
        let m = NeuralFieldModel::builder(&d)
            .activation(0, Activation::linear(0.5, 0.2))
            .activation(1, Activation::linear(1.5, -0.1))
            .kernel(0, 1, k.clone())
            .kernel(1, 0, k)
            .input(0, Field::from_fn(&d, |r| r[0]))
            .alpha(Field::constant(&d, 2.0))
            .controller(Controller::Proportional { gain: 0.7 })
            .build()
            .unwrap();
        let rep = solve_linear_case(&m).unwrap();
        assert!(rep.unique && rep.solvable);
        let fixed = m.apply_tcal(&rep.x).distance(&rep.x).unwrap();
        assert!(fixed <= 1e-13, "{fixed}");
    }
}
