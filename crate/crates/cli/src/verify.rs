//! Invariant checks run against a loaded model.

use std::fmt::Write as _;

use fieldeq::simulate::{simulate, Method, SimulationConfig};
use fieldeq::{Controller, DelayMatrix, FieldPair64, Model64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assemble;
use crate::config::ScenarioConfig;

const SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    spread: f64,
}

impl Sampler {
    fn new(model: &Model64, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spread: 1.0 + model.forcing().sup_norm(),
        }
    }

    /// Random pair with entries in `±scale · (1 + ‖f‖∞)`.
    fn pair(&mut self, model: &Model64, scale: f64) -> FieldPair64 {
        let d = model.domain();
        let s = scale * self.spread;
        let raw: Vec<f64> = (0..2 * d.len()).map(|_| s * self.rng.random_range(-1.0..1.0)).collect();
        FieldPair64::from_stacked(d, &raw).expect("stacked length")
    }
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

fn quadrature(model: &Model64) -> Check {
    let d = model.domain();
    let measure: f64 = d.axes().iter().map(|a| a.hi - a.lo).product();
    let ones = vec![1.0; d.len()];
    let err_one = (d.integrate(&ones) - measure).abs() / measure;
    // ∫ (1 + Σ r_k) is reproduced exactly by both rules.
    let affine: Vec<f64> = d.points().map(|p| 1.0 + p.iter().sum::<f64>()).collect();
    let exact = measure * (1.0 + d.axes().iter().map(|a| 0.5 * (a.lo + a.hi)).sum::<f64>());
    let err_affine = (d.integrate(&affine) - exact).abs() / (1.0 + exact.abs());
    let positive = d.weights().iter().all(|&w| w > 0.0);
    let worst = err_one.max(err_affine);
    Check::new(
        "quadrature",
        positive && worst <= 1e-12,
        format!("weights positive: {positive}; relative error {}", sci(worst)),
    )
}

fn with_gain(model: &Model64, gain: f64) -> Model64 {
    let c = match *model.controller() {
        Controller::ProportionalIntegral { ki, .. } => Controller::ProportionalIntegral { kp: gain, ki },
        _ if gain == 0.0 => Controller::OpenLoop,
        _ => Controller::Proportional { gain },
    };
    model.with_controller(c).expect("non-negative gain")
}

fn h_round_trip(model: &Model64, sampler: &mut Sampler) -> Vec<Check> {
    let k = model.controller().proportional_gain();
    let mut gains = vec![0.0, k, 10.0 * k];
    gains.dedup();
    gains
        .into_iter()
        .map(|g| {
            let m = with_gain(model, g);
            let name = format!("H round trip (k = {g})");
            let mut worst = 0.0_f64;
            for _ in 0..SAMPLES {
                let v = sampler.pair(&m, 1.0);
                match m.invert_h(&v, 1e-13) {
                    Ok(x) => {
                        let err = m.apply_h(&x).sub(&v).expect("same domain").sup_norm();
                        worst = worst.max(err / (1.0 + v.sup_norm()));
                    }
                    Err(e) => return Check::new(name, false, e.to_string()),
                }
            }
            let path = if g == 0.0 { "identity path; " } else { "" };
            Check::new(name, worst <= 1e-9, format!("{path}max relative error {}", sci(worst)))
        })
        .collect()
}

fn sigma_monotone(model: &Model64, sampler: &mut Sampler) -> Check {
    let mut worst = 0.0_f64;
    for scale in [1.0, 10.0] {
        for _ in 0..SAMPLES {
            let x = sampler.pair(model, scale);
            let y = sampler.pair(model, scale);
            let (sx, sy) = (model.apply_sigma(&x), model.apply_sigma(&y));
            for p in 0..2 {
                let (a, b) = (sx.get(p).values(), sy.get(p).values());
                let (u, v) = (x.get(p).values(), y.get(p).values());
                for i in 0..a.len() {
                    worst = worst.min((a[i] - b[i]) * (u[i] - v[i]));
                }
            }
        }
    }
    Check::new(
        "sigma monotone",
        worst >= -1e-12,
        format!("min nodewise (σ(x) − σ(y))(x − y) = {}", sci(worst)),
    )
}

fn rho_bounded(model: &Model64, sampler: &mut Sampler) -> Check {
    let bounds: Vec<Option<f64>> = (0..2).map(|p| model.activation(p).bound()).collect();
    if bounds.iter().any(Option::is_none) {
        return Check::new("rho bounded", true, "skipped: unbounded activation");
    }
    let mut ok = true;
    for scale in [1.0, 1e3, 1e6] {
        for _ in 0..SAMPLES {
            let r = model.apply_rho(&sampler.pair(model, scale));
            for (p, b) in bounds.iter().enumerate() {
                let m = b.expect("checked");
                ok &= r.get(p).values().iter().all(|v| v.abs() <= m * (1.0 + 1e-15));
            }
        }
    }
    Check::new(
        "rho bounded",
        ok,
        format!("bounds M1 = {:?}, M2 = {:?}", bounds[0].unwrap_or(0.0), bounds[1].unwrap_or(0.0)),
    )
}

fn t_equivalence(model: &Model64, sampler: &mut Sampler) -> Check {
    let mut worst = 0.0_f64;
    for _ in 0..SAMPLES {
        let x = sampler.pair(model, 2.0);
        let lhs = model.apply_tcal(&x);
        let rhs = model.t_argument(&model.apply_rho(&x));
        let err = lhs.sub(&rhs).expect("same domain").sup_norm();
        worst = worst.max(err / (1.0 + lhs.sup_norm()));
    }
    Check::new(
        "T/Tcal equivalence",
        worst <= 1e-12,
        format!("max relative |Tcal(x) − arg T(ρ(x))| = {}", sci(worst)),
    )
}

/// Forward Euler written out with the model's nodewise operators.
fn manual_euler(model: &Model64, start: &FieldPair64, dt: f64, steps: usize) -> (FieldPair64, Vec<f64>) {
    let n = model.domain().len();
    let ki = model.controller().integral_gain().unwrap_or(0.0);
    let alpha = model.alpha().values().to_vec();
    let z_ref = model.z_ref().values().to_vec();
    let mut z = start.stacked();
    let mut y = vec![0.0; n];
    for _ in 0..steps {
        let pair = FieldPair64::from_stacked(model.domain(), &z).expect("stacked length");
        let mut arg = model.t_argument(&pair).stacked();
        for a in 0..n {
            arg[a] -= alpha[a] * (ki * y[a]);
        }
        let mut next = z.clone();
        for p in 0..2 {
            let s = model.activation(p);
            let tau = model.tau(p).values();
            for a in 0..n {
                let i = p * n + a;
                next[i] = z[i] + dt * (s.eval(arg[i]) - z[i]) / tau[a];
            }
        }
        for a in 0..n {
            y[a] += dt * (z[a] - z_ref[a]);
        }
        z = next;
    }
    (FieldPair64::from_stacked(model.domain(), &z).expect("stacked length"), y)
}

fn zero_delay_simulator(model: &Model64, cfg: &ScenarioConfig) -> Check {
    let name = "zero-delay simulator";
    let d = model.domain();
    let zero = model
        .with_delays([DelayMatrix::zero(d), DelayMatrix::zero(d)], 0.0)
        .expect("zero delays are valid");
    let steps = 20;
    let dt = cfg.simulation.dt;
    let start = assemble::prehistory(cfg, d);
    let sim = SimulationConfig::new(start.clone(), dt * steps as f64, dt).method(Method::Euler);
    let run = match simulate(&zero, &sim) {
        Ok(run) => run,
        Err(e) => return Check::new(name, false, e.to_string()),
    };
    let (z, y) = manual_euler(&zero, &start, dt, steps);
    let scale = 1.0 + z.sup_norm();
    let mut err = run.final_state().sub(&z).expect("same domain").sup_norm() / scale;
    if let Some(yi) = run.integrator.last() {
        let ey = yi.values().iter().zip(&y).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        err = err.max(ey / (1.0 + yi.sup_norm()));
    }
    Check::new(
        name,
        run.len() == steps + 1 && err <= 1e-12,
        format!("{steps} Euler steps, max relative deviation {}", sci(err)),
    )
}

/// Runs every check with random points drawn from `seed`.
pub fn run_all(model: &Model64, cfg: &ScenarioConfig, seed: u64) -> Vec<Check> {
    let mut sampler = Sampler::new(model, seed);
    let mut out = vec![quadrature(model)];
    out.extend(h_round_trip(model, &mut sampler));
    out.push(sigma_monotone(model, &mut sampler));
    out.push(rho_bounded(model, &mut sampler));
    out.push(t_equivalence(model, &mut sampler));
    out.push(zero_delay_simulator(model, cfg));
    out
}

pub fn table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(
            s,
            "{:<width$}  {}  {}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.detail
        );
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    let _ = writeln!(s, "{passed}/{} checks passed", checks.len());
    s
}

pub fn to_csv(checks: &[Check]) -> String {
    let mut s = String::from("check,passed,detail\n");
    for c in checks {
        let _ = writeln!(s, "{},{},{}", c.name, c.passed, c.detail.replace(',', ";"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn load(extra: &str) -> (Model64, ScenarioConfig) {
        let s = ScenarioConfig::parse(&format!("[domain]\nextent = 0, 2\nnodes = 9\n{extra}")).unwrap();
        (assemble::model(&s).unwrap(), s.config)
    }

    #[test]
    fn all_pass_on_a_coupled_model() {
        let (m, c) = load(
            "[kernel.12]\nfamily = gaussian(-1.5, 0.4)\n[kernel.21]\nfamily = constant(0.8)\n\
             [delay.1]\nfamily = distance_proportional(1)\n[control]\nmode = proportional\nk = 2\nz_ref = 0.3\n\
             [simulation]\nprehistory.1 = affine(0.1, 0.2)\n",
        );
        let checks = run_all(&m, &c, 1);
        assert!(checks.iter().all(|c| c.passed), "{}", table(&checks));
        assert_eq!(checks.len(), 8);
    }

    #[test]
    fn zero_gain_takes_identity_path() {
        let (m, c) = load("");
        let checks = run_all(&m, &c, 0);
        let h: Vec<_> = checks.iter().filter(|c| c.name.starts_with("H round trip")).collect();
        assert_eq!(h.len(), 1);
        assert!(h[0].detail.starts_with("identity path"));
    }

    #[test]
    fn pi_and_unbounded_models() {
        let (m, c) = load(
            "[population.1]\nactivation = relu\n[kernel.11]\nfamily = constant(0.2)\n\
             [control]\nmode = prop_int\nk_P = 1\nk_I = 2\nz_ref = 0.5\n",
        );
        let checks = run_all(&m, &c, 3);
        assert!(checks.iter().all(|c| c.passed), "{}", table(&checks));
        let rho = checks.iter().find(|c| c.name == "rho bounded").unwrap();
        assert!(rho.detail.starts_with("skipped"));
    }
}
