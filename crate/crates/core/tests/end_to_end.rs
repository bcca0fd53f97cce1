use std::sync::Arc;

use fieldeq::simulate::{probe_convergence, rhs, simulate, HistoryBuffer, Method, ProbeOptions, SimulationConfig};
use fieldeq::solver::{
    solve_fixed_point, solve_linear_case, solve_pi_equilibrium, verify_equilibrium, SolverOptions,
};
use fieldeq::{
    Activation, Controller, DelayMatrix, Field, FieldPair, KernelMatrix, NeuralFieldModel, QuadratureRule, Real,
    SpatialDomain,
};
use proptest::prelude::*;

fn gaussian_model<T: Real>(n: usize, gain: f64) -> NeuralFieldModel<T> {
    let d = SpatialDomain::interval(T::zero(), T::lit(2.0), n, QuadratureRule::Trapezoid).unwrap();
    let g = |amp: f64, w: f64| {
        KernelMatrix::assemble(&d, move |r: &[T], s: &[T]| {
            let x = (r[0] - s[0]).as_f64();
            T::lit(amp * (-x * x / (w * w)).exp())
        })
        .unwrap()
    };
    NeuralFieldModel::builder(&d)
        .kernel(0, 0, g(1.0, 0.3))
        .kernel(0, 1, g(-1.2, 0.6))
        .kernel(1, 0, g(0.9, 0.5))
        .input(0, Field::from_fn(&d, |r| T::lit(0.4 * (r[0].as_f64() * 3.0).sin())))
        .input(1, Field::constant(&d, T::lit(-0.2)))
        .activations(Activation::logistic(T::one(), T::lit(3.0), T::lit(0.1)))
        .z_ref(Field::constant(&d, T::lit(0.4)))
        .controller(Controller::Proportional { gain: T::lit(gain) })
        .delay(0, DelayMatrix::distance_proportional(&d, T::one(), T::lit(2.0)).unwrap())
        .build()
        .unwrap()
}

#[test]
fn f32_and_f64_agree() {
    let m64 = gaussian_model::<f64>(25, 2.0);
    let m32 = gaussian_model::<f32>(25, 2.0);
    let r64 = solve_fixed_point(&m64, &SolverOptions::default()).unwrap();
    let opts32 = SolverOptions {
        tol: 1e-5_f32,
        ..SolverOptions::default()
    };
    let r32 = solve_fixed_point(&m32, &opts32).unwrap();
    assert!(r64.converged && r32.converged);
    for (a, b) in r64.z_star.stacked().iter().zip(r32.z_star.stacked()) {
        assert!((a - b as f64).abs() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn equilibrium_is_a_rest_point_of_the_delayed_dynamics() {
    let m = gaussian_model::<f64>(31, 1.0);
    let r = solve_fixed_point(&m, &SolverOptions::default()).unwrap();
    assert!(r.converged);
    assert!(verify_equilibrium(&m, &r.z_star).pair_norm <= 1e-9);
    let dt = 1e-2;
    let mut history = HistoryBuffer::new(&r.z_star, dt, m.max_delay());
    for _ in 0..300 {
        history.push(&r.z_star.stacked());
    }
    let (dz, dy) = rhs(&m, 3.0, &r.z_star, None, &history, None).unwrap();
    assert!(dy.is_none());
    assert!(dz.sup_norm() <= 1e-9, "{}", dz.sup_norm());
}

#[test]
fn heun_trajectory_settles_on_the_solver_equilibrium() {
    let m = gaussian_model::<f64>(21, 1.0);
    let r = solve_fixed_point(&m, &SolverOptions::default()).unwrap();
    let start = FieldPair::constant(m.domain(), 0.1, 0.1);
    let cfg = SimulationConfig::new(start, 60.0, 2e-2)
        .method(Method::Heun)
        .stride(50)
        .reference(r.z_star.clone());
    let run = simulate(&m, &cfg).unwrap();
    let d = run.distance_to_reference.unwrap();
    assert!(*d.last().unwrap() <= 1e-6, "{}", d.last().unwrap());
}

#[test]
fn pi_equilibrium_attracts_nearby_trajectories() {
    let d = SpatialDomain::interval(0.0, 1.0, 15, QuadratureRule::Midpoint).unwrap();
    let k = KernelMatrix::assemble(&d, |r: &[f64], s: &[f64]| -0.5 * (-(r[0] - s[0]).powi(2) / 0.1).exp()).unwrap();
    let m = NeuralFieldModel::builder(&d)
        .kernel(0, 1, k.clone())
        .kernel(1, 0, k.clone())
        .z_ref(Field::from_fn(&d, |r| 0.3 + 0.2 * r[0]))
        .controller(Controller::ProportionalIntegral { kp: 1.0, ki: 0.8 })
        .build()
        .unwrap();
    let eq = solve_pi_equilibrium(&m, &SolverOptions::default()).unwrap();
    let mut opts = ProbeOptions::new(0.05, 80.0, 1e-2);
    opts.integrator = Some(eq.y1_star.clone());
    opts.seed = 5;
    let report = probe_convergence(&m, &eq.z_star(), &opts).unwrap();
    assert!(report.converged, "terminal {}", report.terminal);
}

#[test]
fn linear_solve_matches_iteration() {
    let d = SpatialDomain::interval(-1.0, 1.0, 17, QuadratureRule::Trapezoid).unwrap();
    let k = KernelMatrix::assemble(&d, |r: &[f64], s: &[f64]| 0.3 * (r[0] * s[0]).cos()).unwrap();
    let m = NeuralFieldModel::builder(&d)
        .activation(0, Activation::linear(0.8, 0.1))
        .activation(1, Activation::linear(0.5, -0.2))
        .kernel(0, 0, k.clone())
        .kernel(1, 0, k)
        .input(0, Field::from_fn(&d, |r| r[0]))
        .controller(Controller::Proportional { gain: 3.0 })
        .build()
        .unwrap();
    let direct = solve_linear_case(&m).unwrap();
    assert!(direct.solvable && direct.unique);
    let iterated = solve_fixed_point(&m, &SolverOptions::default()).unwrap();
    assert!(direct.x.distance(&iterated.x_star).unwrap() <= 1e-9);
}

fn homogeneous(
    d: &Arc<SpatialDomain<f64>>,
    c: [f64; 4],
    inputs: (f64, f64),
    gain: f64,
) -> NeuralFieldModel<f64> {
    let k = |v: f64| KernelMatrix::assemble(d, move |_, _| v).unwrap();
    NeuralFieldModel::builder(d)
        .kernel(0, 0, k(c[0]))
        .kernel(0, 1, k(c[1]))
        .kernel(1, 0, k(c[2]))
        .kernel(1, 1, k(c[3]))
        .input(0, Field::constant(d, inputs.0))
        .input(1, Field::constant(d, inputs.1))
        .controller(Controller::Proportional { gain })
        .build()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    // bounded activations: the solver finds a point inside the a-priori ball
    #[test]
    fn bounded_models_converge_within_bound(
        c in proptest::array::uniform4(-3.0..3.0_f64),
        i1 in -2.0..2.0_f64,
        i2 in -2.0..2.0_f64,
        gain in prop_oneof![Just(0.0), 0.0..100.0_f64],
    ) {
        let d = SpatialDomain::interval(0.0, 1.0, 9, QuadratureRule::Trapezoid).unwrap();
        let m = homogeneous(&d, c, (i1, i2), gain);
        let opts = SolverOptions { multistart: 3, ..SolverOptions::default() };
        let r = solve_fixed_point(&m, &opts).unwrap();
        prop_assume!(r.converged);
        prop_assert!(r.residual_t <= 10.0 * opts.tol);
        prop_assert_eq!(r.within_bound, Some(true));
        prop_assert!(verify_equilibrium(&m, &r.z_star).pair_norm <= 10.0 * opts.tol);
    }
}
