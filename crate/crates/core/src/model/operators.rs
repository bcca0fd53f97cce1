use super::{ModelError, NeuralFieldModel};
use crate::grid::{Field, FieldPair};
use crate::roots::{self, RootError};
use crate::scalar::Real;

impl<T: Real> NeuralFieldModel<T> {
    fn pair(&self, first: Vec<T>, second: Vec<T>) -> FieldPair<T> {
        FieldPair::new(
            Field::from_values(&self.domain, first).expect("node count"),
            Field::from_values(&self.domain, second).expect("node count"),
        )
        .expect("same domain")
    }

    /// Nodewise `k α(r)` for the proportional part of the loop.
    pub fn feedback_profile(&self) -> Field<T> {
        let k = self.controller.proportional_gain();
        self.alpha.map(|a| k * a)
    }

    /// `ρ(x) = (S₁(x₁), S₂(x₂))`.
    pub fn apply_rho(&self, x: &FieldPair<T>) -> FieldPair<T> {
        let [s1, s2] = &self.activations;
        self.pair(
            x.first().values().iter().map(|&v| s1.eval(v)).collect(),
            x.second().values().iter().map(|&v| s2.eval(v)).collect(),
        )
    }

    /// `σ(x) = (k α S₁(x₁), 0)`.
    pub fn apply_sigma(&self, x: &FieldPair<T>) -> FieldPair<T> {
        let k = self.controller.proportional_gain();
        let s1 = &self.activations[0];
        let first = x
            .first()
            .values()
            .iter()
            .zip(self.alpha.values())
            .map(|(&v, &a)| k * a * s1.eval(v))
            .collect();
        self.pair(first, vec![T::zero(); self.domain.len()])
    }

    /// Block integral operator: component `i` is `Σ_j ∫ w_ij(·, r′) p_j(r′) dr′`.
    pub fn apply_w(&self, p: &FieldPair<T>) -> FieldPair<T> {
        let out = self.apply_w_raw(p.first().values(), p.second().values());
        let [a, b] = out;
        self.pair(a, b)
    }

    pub(crate) fn apply_w_raw(&self, p1: &[T], p2: &[T]) -> [Vec<T>; 2] {
        let n = self.domain.len();
        let mut out = [vec![T::zero(); n], vec![T::zero(); n]];
        let mut tmp = vec![T::zero(); n];
        for (i, o) in out.iter_mut().enumerate() {
            self.kernels[i][0].apply_into(p1, o);
            self.kernels[i][1].apply_into(p2, &mut tmp);
            for (x, &t) in o.iter_mut().zip(&tmp) {
                *x += t;
            }
        }
        out
    }

    /// `f = (I₁* + k α z_ref, I₂*)`.
    pub fn forcing(&self) -> FieldPair<T> {
        let k = self.controller.proportional_gain();
        let first = self.input[0]
            .values()
            .iter()
            .zip(self.alpha.values())
            .zip(self.z_ref.values())
            .map(|((&i, &a), &z)| i + k * a * z)
            .collect();
        self.pair(first, self.input[1].values().to_vec())
    }

    /// `H(x) = x + σ(x)`.
    pub fn apply_h(&self, x: &FieldPair<T>) -> FieldPair<T> {
        x.add(&self.apply_sigma(x)).expect("same domain")
    }

    /// Solves `H(x) = v` nodewise. The second component is copied; the first
    /// solves the strictly increasing scalar equation
    /// `s + kα(r) S₁(s) = v₁(r)` to residual `tol`.
    pub fn invert_h(&self, v: &FieldPair<T>, tol: T) -> Result<FieldPair<T>, ModelError> {
        let k = self.controller.proportional_gain();
        let s1 = self.activations[0];
        let bound = s1.bound();
        let mut first = Vec::with_capacity(self.domain.len());
        for (node, (&target, &a)) in v.first().values().iter().zip(self.alpha.values()).enumerate() {
            let c = k * a;
            if c == T::zero() {
                first.push(target);
                continue;
            }
            let g = |s: T| (s + c * s1.eval(s) - target, T::one() + c * s1.derivative(s));
            let (lo, hi) = match bound {
                Some(m) => {
                    // widen by a few ulps so rounding cannot exclude an endpoint root
                    let pad = T::lit(4.0) * T::epsilon() * (target.abs() + c * m);
                    (target - c * m - pad, target + c * m + pad)
                }
                None => roots::expand_bracket(|s| g(s).0, target).ok_or(ModelError::InvertH {
                    node,
                    source: RootError::BracketFailure {
                        lo: target.as_f64(),
                        hi: target.as_f64(),
                        g_lo: f64::NAN,
                        g_hi: f64::NAN,
                    },
                })?,
            };
            let root = roots::safeguarded_newton(g, lo, hi, tol, target.abs() + c * s1.eval(target).abs())
                .map_err(|source| ModelError::InvertH { node, source })?;
            first.push(root.root);
        }
        Ok(self.pair(first, v.second().values().to_vec()))
    }

    /// Argument of the activations in the stationarity map `T`:
    /// `(I₁* − kα(z₁ − z_ref) + Σ_j W₁ⱼ z_j, I₂* + Σ_j W₂ⱼ z_j)`.
    pub fn t_argument(&self, z: &FieldPair<T>) -> FieldPair<T> {
        let k = self.controller.proportional_gain();
        let [w1, w2] = self.apply_w_raw(z.first().values(), z.second().values());
        let first = (0..self.domain.len())
            .map(|a| {
                self.input[0].values()[a] - k * self.alpha.values()[a] * (z.first().values()[a] - self.z_ref.values()[a])
                    + w1[a]
            })
            .collect();
        let second = self.input[1]
            .values()
            .iter()
            .zip(&w2)
            .map(|(&i, &w)| i + w)
            .collect();
        self.pair(first, second)
    }

    /// Stationarity map `T(z) = ρ(t_argument(z))`; its fixed points are the
    /// closed-loop equilibria.
    pub fn apply_t(&self, z: &FieldPair<T>) -> FieldPair<T> {
        self.apply_rho(&self.t_argument(z))
    }

    /// `𝒯(x) = f + W(ρ(x)) − σ(x)`.
    pub fn apply_tcal(&self, x: &FieldPair<T>) -> FieldPair<T> {
        let rho = self.apply_rho(x);
        self.forcing()
            .add(&self.apply_w(&rho))
            .and_then(|s| s.sub(&self.apply_sigma(x)))
            .expect("same domain")
    }

    /// `W(ρ(x)) + f`, the right-hand side handed to `H⁻¹`.
    pub fn pi_target(&self, x: &FieldPair<T>) -> FieldPair<T> {
        let rho = self.apply_rho(x);
        self.apply_w(&rho).add(&self.forcing()).expect("same domain")
    }

    /// `π(x) = H⁻¹(W(ρ(x)) + f)`.
    pub fn apply_pi(&self, x: &FieldPair<T>, tol: T) -> Result<FieldPair<T>, ModelError> {
        self.invert_h(&self.pi_target(x), tol)
    }

    /// Discrete Hilbert-Schmidt norm of the block operator `W`.
    pub fn w_hs_norm(&self) -> T {
        self.kernels
            .iter()
            .flatten()
            .map(|k| k.hs_norm() * k.hs_norm())
            .sum::<T>()
            .sqrt()
    }

    /// Norm bound `‖f‖ + ‖W‖_HS √(2|Ω|) max(M₁, M₂) + ‖kα‖_∞ M₁ √|Ω|` valid
    /// for every value of `π` (and so every fixed point). `None` when an
    /// activation is unbounded.
    pub fn a_priori_bound(&self) -> Option<T> {
        let m1 = self.activations[0].bound()?;
        let m2 = self.activations[1].bound()?;
        let measure = self.domain.measure();
        let two = T::lit(2.0);
        Some(
            self.forcing().pair_norm()
                + self.w_hs_norm() * (two * measure).sqrt() * m1.max(m2)
                + self.feedback_profile().sup_norm() * m1 * measure.sqrt(),
        )
    }

    /// Lipschitz constant of `ρ` in the pair norm.
    pub fn rho_lipschitz(&self) -> T {
        self.activations[0].lipschitz().max(self.activations[1].lipschitz())
    }
}
