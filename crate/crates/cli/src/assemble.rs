use std::sync::Arc;

use fieldeq::{Axis, Controller, DelayMatrix, Domain64, Field64, FieldPair64, Kernel64, Model64, ModelError};

use crate::config::{ConfigError, ControlMode, DelayFamily, FieldExpr, Scenario, ScenarioConfig};

pub fn domain(cfg: &ScenarioConfig) -> Result<Arc<Domain64>, ConfigError> {
    let axes: Vec<Axis<f64>> = cfg
        .domain
        .extent
        .iter()
        .zip(&cfg.domain.nodes)
        .map(|(&(lo, hi), &n)| Axis::new(lo, hi, n))
        .collect();
    Domain64::build(&axes, cfg.domain.rule).map_err(|e| ConfigError::Model(format!("domain: {e}")))
}

pub fn field(domain: &Arc<Domain64>, expr: &FieldExpr) -> Field64 {
    Field64::from_fn(domain, |r| expr.eval(r))
}

pub fn controller(mode: ControlMode) -> Controller<f64> {
    match mode {
        ControlMode::OpenLoop => Controller::OpenLoop,
        ControlMode::Proportional { k } => Controller::Proportional { gain: k },
        ControlMode::PropInt { k_p, k_i } => Controller::ProportionalIntegral { kp: k_p, ki: k_i },
    }
}

fn delay_matrix(domain: &Arc<Domain64>, family: &DelayFamily, cap: Option<f64>) -> Result<DelayMatrix<f64>, ConfigError> {
    let m = match *family {
        DelayFamily::Zero => Ok(DelayMatrix::zero(domain)),
        DelayFamily::Constant(c) => DelayMatrix::assemble(domain, |_, _| c),
        DelayFamily::DistanceProportional(v) => {
            DelayMatrix::distance_proportional(domain, v, cap.unwrap_or(f64::INFINITY))
        }
    };
    m.map_err(|e| ConfigError::Model(e.to_string()))
}

/// Builds the discretized model. Validation failures are reported against
/// the config key that caused them.
pub fn model(scenario: &Scenario) -> Result<Model64, ConfigError> {
    let cfg = &scenario.config;
    let d = domain(cfg)?;
    let mut b = Model64::builder(&d)
        .alpha(field(&d, &cfg.control.alpha))
        .z_ref(field(&d, &cfg.control.z_ref))
        .controller(controller(cfg.control.mode));
    for (p, pop) in cfg.populations.iter().enumerate() {
        b = b
            .tau(p, field(&d, &pop.tau))
            .input(p, field(&d, &pop.i_star))
            .activation(p, pop.activation);
    }
    for (i, row) in cfg.kernels.iter().enumerate() {
        for (j, fam) in row.iter().enumerate() {
            let k = Kernel64::assemble(&d, |r, s| fam.eval(r, s))
                .map_err(|e| scenario.error(&format!("kernel.{}{}.family", i + 1, j + 1), e.to_string()))?;
            b = b.kernel(i, j, k);
        }
    }
    let mut d_bar = 0.0_f64;
    for (j, del) in cfg.delays.iter().enumerate() {
        let m = delay_matrix(&d, &del.family, del.d_bar)?;
        d_bar = d_bar.max(del.d_bar.unwrap_or(m.max_entry()));
        b = b.delay(j, m);
    }
    b.max_delay(d_bar).build().map_err(|e| model_error(scenario, e))
}

fn model_error(scenario: &Scenario, e: ModelError) -> ConfigError {
    let msg = e.to_string();
    match e {
        ModelError::NonPositiveTau { population, .. } => {
            scenario.error(&format!("population.{}.tau", population + 1), msg)
        }
        ModelError::Activation { population, .. } => {
            scenario.error(&format!("population.{}.activation", population + 1), msg)
        }
        ModelError::NegativeAlpha { .. } => scenario.error("control.alpha", msg),
        ModelError::NegativeGain => scenario.error("control.mode", msg),
        _ => ConfigError::Model(msg),
    }
}

/// The two prehistory fields from `[simulation]`.
pub fn prehistory(cfg: &ScenarioConfig, domain: &Arc<Domain64>) -> FieldPair64 {
    FieldPair64::new(
        field(domain, &cfg.simulation.prehistory[0]),
        field(domain, &cfg.simulation.prehistory[1]),
    )
    .expect("same domain")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(extra: &str) -> Scenario {
        ScenarioConfig::parse(&format!("[domain]\nextent = 0, 1\nnodes = 11\n{extra}")).unwrap()
    }

    #[test]
    fn defaults_build() {
        let m = model(&parse("")).unwrap();
        assert_eq!(m.domain().len(), 11);
        assert_eq!(m.max_delay(), 0.0);
    }

    #[test]
    fn tau_error_names_key() {
        let s = parse("[population.2]\ntau = affine(-0.5, 1)\n");
        let e = model(&s).unwrap_err();
        assert!(matches!(e, ConfigError::Value { line: 5, .. }), "{e}");
        assert!(e.to_string().contains("population.2.tau"));
    }

    #[test]
    fn delay_cap_and_max_delay() {
        let s = parse("[delay.1]\nfamily = distance_proportional(0.25)\nd_bar = 2\n[delay.2]\nfamily = constant(0.5)\n");
        let m = model(&s).unwrap();
        assert_eq!(m.delay(0).entry(0, 10), 2.0);
        assert_eq!(m.delay(0).entry(0, 2), 0.8);
        assert_eq!(m.max_delay(), 2.0);
        let s = parse("[delay.1]\nfamily = distance_proportional(2)\n");
        assert_eq!(model(&s).unwrap().max_delay(), 0.5);
    }

    #[test]
    fn kernel_orientation() {
        let s = parse("[kernel.12]\nfamily = constant(-0.7)\n");
        let m = model(&s).unwrap();
        // Nyström entries carry the quadrature weight 0.1.
        assert!((m.kernel(0, 1).entry(3, 4) + 0.07).abs() < 1e-15);
        assert!(m.kernel(1, 0).is_zero());
    }
}
