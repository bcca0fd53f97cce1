use fieldeq::simulate::Method;
use fieldeq::solver::SolverOptions;
use fieldeq::{Activation64, QuadratureRule};
use fieldeq_cli::assemble;
use fieldeq_cli::config::{
    ControlMode, ControlSection, DelayFamily, DelaySection, DomainSection, FieldExpr, KernelFamily,
    PopulationSection, ScenarioConfig, SimulationSection,
};
use fieldeq_cli::Scenario;
use proptest::prelude::*;

fn real() -> impl Strategy<Value = f64> {
    prop_oneof![-10.0..10.0_f64, Just(0.0), Just(0.1), Just(-1e-300), Just(1.0 / 3.0)]
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-3..10.0_f64, Just(0.1), Just(1.0)]
}

fn field(dim: usize) -> BoxedStrategy<FieldExpr> {
    prop_oneof![
        real().prop_map(FieldExpr::Constant),
        proptest::collection::vec(real(), dim + 1).prop_map(FieldExpr::Affine),
        (real(), proptest::collection::vec(real(), dim), positive(), real()).prop_map(
            |(amplitude, center, width, base)| FieldExpr::Gaussian {
                amplitude,
                center,
                width,
                base
            }
        ),
    ]
    .boxed()
}

// Strictly positive everywhere on the domain.
fn tau(dim: usize) -> BoxedStrategy<FieldExpr> {
    prop_oneof![
        positive().prop_map(FieldExpr::Constant),
        (positive(), Just(dim)).prop_map(|(c, dim)| {
            let mut v = vec![c + 0.5];
            v.extend(std::iter::repeat_n(0.01, dim));
            FieldExpr::Affine(v)
        }),
        (positive(), proptest::collection::vec(real(), dim), positive(), positive()).prop_map(
            |(amplitude, center, width, base)| FieldExpr::Gaussian {
                amplitude,
                center,
                width,
                base
            }
        ),
    ]
    .boxed()
}

fn activation() -> impl Strategy<Value = Activation64> {
    prop_oneof![
        (positive(), positive(), real()).prop_map(|(l, b, t)| Activation64::logistic(l, b, t)),
        (positive(), real(), positive()).prop_map(|(m, lo, w)| Activation64::clamp(m, lo, lo + w)),
        (0.0..5.0_f64, real()).prop_map(|(m, c)| Activation64::linear(m, c)),
        Just(Activation64::Relu),
    ]
}

fn kernel() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![
        Just(KernelFamily::Zero),
        real().prop_map(KernelFamily::Constant),
        (real(), positive()).prop_map(|(amplitude, width)| KernelFamily::Gaussian { amplitude, width }),
        (real(), positive(), real(), positive()).prop_map(|(a1, w1, a2, w2)| KernelFamily::MexicanHat {
            a1,
            w1,
            a2,
            w2
        }),
    ]
}

fn delay() -> impl Strategy<Value = DelaySection> {
    prop_oneof![
        Just(DelaySection {
            family: DelayFamily::Zero,
            d_bar: None
        }),
        (0.0..3.0_f64).prop_map(|c| DelaySection {
            family: DelayFamily::Constant(c),
            d_bar: Some(c + 0.5)
        }),
        (positive(), proptest::option::of(0.0..3.0_f64)).prop_map(|(v, d_bar)| DelaySection {
            family: DelayFamily::DistanceProportional(v),
            d_bar
        }),
    ]
}

fn mode() -> impl Strategy<Value = ControlMode> {
    prop_oneof![
        Just(ControlMode::OpenLoop),
        (0.0..100.0_f64).prop_map(|k| ControlMode::Proportional { k }),
        (0.0..10.0_f64, 0.0..10.0_f64).prop_map(|(k_p, k_i)| ControlMode::PropInt { k_p, k_i }),
    ]
}

fn solver() -> impl Strategy<Value = SolverOptions<f64>> {
    (
        1usize..20000,
        1e-14..1e-6_f64,
        0.01..=1.0_f64,
        0usize..8,
        proptest::option::of(1e-15..1e-8_f64),
        1usize..4,
        any::<u64>(),
        prop_oneof![Just(0usize), 2usize..6],
    )
        .prop_map(|(max_iterations, tol, damping, depth, inner_tol, multistart, seed, samples)| {
            SolverOptions {
                max_iterations,
                tol,
                damping,
                anderson_depth: depth,
                inner_tol,
                multistart,
                seed,
                contraction_samples: samples,
            }
        })
}

fn config() -> impl Strategy<Value = ScenarioConfig> {
    (1usize..=2).prop_flat_map(|dim| {
        let domain = (
            proptest::collection::vec((real(), positive()), dim),
            proptest::collection::vec(2usize..6, dim),
            prop_oneof![Just(QuadratureRule::Midpoint), Just(QuadratureRule::Trapezoid)],
        )
            .prop_map(|(ext, nodes, rule)| DomainSection {
                extent: ext.into_iter().map(|(lo, w)| (lo, lo + w)).collect(),
                nodes,
                rule,
            });
        let pop = || {
            (tau(dim), field(dim), activation()).prop_map(|(tau, i_star, activation)| PopulationSection {
                tau,
                i_star,
                activation,
            })
        };
        let control = (mode(), field(dim).prop_map(|f| match f {
            // α must be non-negative
            FieldExpr::Constant(c) => FieldExpr::Constant(c.abs()),
            _ => FieldExpr::Constant(1.0),
        }), field(dim))
            .prop_map(|(mode, alpha, z_ref)| ControlSection { mode, alpha, z_ref });
        let simulation = (1e-4..0.1_f64, 1.0..50.0_f64, any::<bool>(), 1usize..50, field(dim), field(dim)).prop_map(
            |(dt, t_end, heun, stride, p1, p2)| SimulationSection {
                dt,
                t_end,
                method: if heun { Method::Heun } else { Method::Euler },
                stride,
                prehistory: [p1, p2],
            },
        );
        (
            domain,
            [pop(), pop()],
            [[kernel(), kernel()], [kernel(), kernel()]],
            [delay(), delay()],
            control,
            solver(),
            simulation,
        )
            .prop_map(|(domain, populations, kernels, delays, control, solver, simulation)| ScenarioConfig {
                domain,
                populations,
                kernels,
                delays,
                control,
                solver,
                simulation,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_text_round_trips(cfg in config()) {
        let text = cfg.to_canonical();
        let back = ScenarioConfig::parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back.config, &cfg);
        prop_assert_eq!(back.config.to_canonical(), text);
    }

    #[test]
    fn round_trip_gives_identical_model(cfg in config()) {
        let original = assemble::model(&Scenario::new(cfg.clone()));
        let back = ScenarioConfig::parse(&cfg.to_canonical()).unwrap();
        match (original, assemble::model(&back)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }
}
