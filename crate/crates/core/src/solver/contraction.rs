//! Empirical Lipschitz modulus of `π`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SolveError, SolverOptions};
use crate::grid::FieldPair;
use crate::model::NeuralFieldModel;
use crate::scalar::Real;

// secant power steps applied to each sampled direction
const REFINE_STEPS: usize = 30;
const RELATIVE_RADIUS: f64 = 1e-4;

/// Largest observed `‖π(x) − π(y)‖ / ‖x − y‖`. A value below one suggests
/// a unique fixed point but is a sampled lower estimate of the true modulus,
/// not a certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionEstimate<T> {
    pub ratio: T,
    pub samples: usize,
    pub evaluations: usize,
}

impl<T: Real> ContractionEstimate<T> {
    pub fn looks_contractive(&self) -> bool {
        self.ratio < T::one()
    }

    pub fn label(&self) -> &'static str {
        if self.looks_contractive() {
            "empirical contraction (non-certifying)"
        } else {
            "no contraction observed (non-certifying)"
        }
    }
}

/// Samples `samples` seeded directions around `center` (default `f`) and
/// refines each by repeatedly replacing the direction `d` with the secant
/// image `π(c + d) − π(c)`, rescaled to the sampling radius. For affine `π`
/// with self-adjoint linear part this converges to the operator norm.
pub fn estimate_contraction<T: Real>(
    model: &NeuralFieldModel<T>,
    opts: &SolverOptions<T>,
    samples: usize,
    center: Option<&FieldPair<T>>,
) -> Result<ContractionEstimate<T>, SolveError> {
    if samples < 2 {
        return Err(SolveError::InvalidOptions("contraction samples must be >= 2".into()));
    }
    let tol = opts.inner_tolerance();
    let center = center.cloned().unwrap_or_else(|| model.forcing());
    let domain = center.domain().clone();
    let radius = T::lit(RELATIVE_RADIUS) * (T::one() + center.pair_norm());
    let base = model.apply_pi(&center, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut ratio = T::zero();
    let mut evaluations = 1;

    for _ in 0..samples {
        let raw: Vec<T> = (0..2 * domain.len()).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
        let mut dir = FieldPair::from_stacked(&domain, &raw).expect("stacked length");
        for _ in 0..=REFINE_STEPS {
            let len = dir.pair_norm();
            if !(len > T::zero()) {
                break;
            }
            let d = dir.scale(radius / len);
            let moved = model.apply_pi(&center.add(&d).expect("same domain"), tol)?;
            evaluations += 1;
            let image = moved.sub(&base).expect("same domain");
            let r = image.pair_norm() / d.pair_norm();
            if r > ratio {
                ratio = r;
            }
            dir = image;
        }
    }
    Ok(ContractionEstimate {
        ratio,
        samples,
        evaluations,
    })
}
