//! Scenario files: a sectioned `key = value` format with `#` comments.
//!
//! ```text
//! [domain]
//! dim = 1
//! extent = 0, 1
//! nodes = 41
//! rule = trapezoid
//!
//! [population.1]
//! tau = constant(1)
//! I_star = affine(0.2, 0.3)
//! activation = logistic(1, 1, 0)
//!
//! [kernel.12]
//! family = gaussian(-2, 0.3)
//!
//! [delay.1]
//! family = distance_proportional(1)
//! d_bar = 2
//!
//! [control]
//! mode = proportional
//! k = 1
//! alpha = constant(1)
//! z_ref = gaussian(0.2, 0.5, 0.1, 0.3)
//! ```
//!
//! Every section and key is optional except `[domain]`; unknown sections and
//! keys are errors. [`ScenarioConfig::to_canonical`] writes every key in a
//! fixed order and parses back to an equal value.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use fieldeq::simulate::Method;
use fieldeq::solver::SolverOptions;
use fieldeq::{Activation64, QuadratureRule};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {key}: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error("{key}: {msg}")]
    Missing { key: String, msg: String },
    #[error("{0}")]
    Model(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

/// A call `name(a, b, ...)`, a bare `name`, or a bare number.
#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub name: String,
    pub args: Vec<f64>,
}

fn parse_number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{}' is not a number", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{}' is not finite", s.trim()))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_number).collect()
}

pub fn parse_call(s: &str) -> Result<Call, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty value".into());
    }
    if let Ok(v) = parse_number(s) {
        return Ok(Call {
            name: "constant".into(),
            args: vec![v],
        });
    }
    match s.find('(') {
        None => {
            if s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                Ok(Call {
                    name: s.into(),
                    args: Vec::new(),
                })
            } else {
                Err(format!("cannot parse '{s}'"))
            }
        }
        Some(open) => {
            let rest = s[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| format!("missing ')' in '{s}'"))?;
            let name = s[..open].trim().to_string();
            let args = if rest.trim().is_empty() { Vec::new() } else { parse_list(rest)? };
            Ok(Call { name, args })
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_call(name: &str, args: &[f64]) -> String {
    if args.is_empty() {
        return name.to_string();
    }
    let a: Vec<String> = args.iter().map(|&v| fmt_f64(v)).collect();
    format!("{name}({})", a.join(", "))
}

/// Spatial profile of a scalar field.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldExpr {
    Constant(f64),
    /// `c₀ + Σ_d c_{d+1} r_d`.
    Affine(Vec<f64>),
    /// `base + amplitude · exp(−|r − center|² / width²)`.
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
        base: f64,
    },
}

impl FieldExpr {
    fn parse(call: &Call, dim: usize) -> Result<Self, String> {
        let a = &call.args;
        match call.name.as_str() {
            "constant" if a.len() == 1 => Ok(FieldExpr::Constant(a[0])),
            "affine" if a.len() == dim + 1 => Ok(FieldExpr::Affine(a.clone())),
            "gaussian" if a.len() == dim + 2 || a.len() == dim + 3 => {
                let width = a[dim + 1];
                if !(width > 0.0) {
                    return Err("gaussian width must be > 0".into());
                }
                Ok(FieldExpr::Gaussian {
                    amplitude: a[0],
                    center: a[1..=dim].to_vec(),
                    width,
                    base: a.get(dim + 2).copied().unwrap_or(0.0),
                })
            }
            "constant" | "affine" | "gaussian" => Err(format!(
                "wrong number of arguments for {} in {dim}D (expected constant(c), affine(c0, {}), gaussian(amplitude, {}, width[, base]))",
                call.name,
                (1..=dim).map(|d| format!("c{d}")).collect::<Vec<_>>().join(", "),
                (1..=dim).map(|d| format!("center{d}")).collect::<Vec<_>>().join(", ")
            )),
            other => Err(format!("unknown field expression '{other}'")),
        }
    }

    pub fn eval(&self, r: &[f64]) -> f64 {
        match self {
            FieldExpr::Constant(c) => *c,
            FieldExpr::Affine(c) => c[1..].iter().zip(r).fold(c[0], |acc, (ci, x)| acc + ci * x),
            FieldExpr::Gaussian {
                amplitude,
                center,
                width,
                base,
            } => {
                let d2: f64 = r.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                base + amplitude * (-d2 / (width * width)).exp()
            }
        }
    }

    fn canonical(&self) -> String {
        match self {
            FieldExpr::Constant(c) => fmt_call("constant", &[*c]),
            FieldExpr::Affine(c) => fmt_call("affine", c),
            FieldExpr::Gaussian {
                amplitude,
                center,
                width,
                base,
            } => {
                let mut a = vec![*amplitude];
                a.extend(center);
                a.push(*width);
                a.push(*base);
                fmt_call("gaussian", &a)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub enum KernelFamily {
    #[default]
    Zero,
    Constant(f64),
    /// `amplitude · exp(−|r − r′|² / width²)`.
    Gaussian { amplitude: f64, width: f64 },
    /// Difference of two Gaussians `a₁ e^{−d²/w₁²} − a₂ e^{−d²/w₂²}`.
    MexicanHat { a1: f64, w1: f64, a2: f64, w2: f64 },
}

impl KernelFamily {
    fn parse(call: &Call) -> Result<Self, String> {
        let a = &call.args;
        let positive = |w: f64| if w > 0.0 { Ok(w) } else { Err("kernel widths must be > 0".to_string()) };
        match (call.name.as_str(), a.len()) {
            ("zero", 0) => Ok(KernelFamily::Zero),
            ("constant", 1) => Ok(KernelFamily::Constant(a[0])),
            ("gaussian", 2) => Ok(KernelFamily::Gaussian {
                amplitude: a[0],
                width: positive(a[1])?,
            }),
            ("mexican_hat", 4) => Ok(KernelFamily::MexicanHat {
                a1: a[0],
                w1: positive(a[1])?,
                a2: a[2],
                w2: positive(a[3])?,
            }),
            _ => Err(format!(
                "expected zero, constant(c), gaussian(amplitude, width) or mexican_hat(a1, w1, a2, w2), got '{}'",
                fmt_call(&call.name, a)
            )),
        }
    }

    pub fn eval(&self, r: &[f64], s: &[f64]) -> f64 {
        let d2: f64 = r.iter().zip(s).map(|(x, y)| (x - y) * (x - y)).sum();
        match *self {
            KernelFamily::Zero => 0.0,
            KernelFamily::Constant(c) => c,
            KernelFamily::Gaussian { amplitude, width } => amplitude * (-d2 / (width * width)).exp(),
            KernelFamily::MexicanHat { a1, w1, a2, w2 } => {
                a1 * (-d2 / (w1 * w1)).exp() - a2 * (-d2 / (w2 * w2)).exp()
            }
        }
    }

    fn canonical(&self) -> String {
        match *self {
            KernelFamily::Zero => "zero".into(),
            KernelFamily::Constant(c) => fmt_call("constant", &[c]),
            KernelFamily::Gaussian { amplitude, width } => fmt_call("gaussian", &[amplitude, width]),
            KernelFamily::MexicanHat { a1, w1, a2, w2 } => fmt_call("mexican_hat", &[a1, w1, a2, w2]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelayFamily {
    Zero,
    Constant(f64),
    /// `min(|r − r′| / speed, d_bar)`.
    DistanceProportional(f64),
}

impl DelayFamily {
    fn parse(call: &Call) -> Result<Self, String> {
        let a = &call.args;
        match (call.name.as_str(), a.len()) {
            ("zero", 0) => Ok(DelayFamily::Zero),
            ("constant", 1) if a[0] >= 0.0 => Ok(DelayFamily::Constant(a[0])),
            ("constant", 1) => Err("constant delay must be >= 0".into()),
            ("distance_proportional", 1) if a[0] > 0.0 => Ok(DelayFamily::DistanceProportional(a[0])),
            ("distance_proportional", 1) => Err("propagation speed must be > 0".into()),
            _ => Err(format!(
                "expected zero, constant(c) or distance_proportional(speed), got '{}'",
                fmt_call(&call.name, a)
            )),
        }
    }

    fn canonical(&self) -> String {
        match *self {
            DelayFamily::Zero => "zero".into(),
            DelayFamily::Constant(c) => fmt_call("constant", &[c]),
            DelayFamily::DistanceProportional(v) => fmt_call("distance_proportional", &[v]),
        }
    }
}

fn parse_activation(call: &Call) -> Result<Activation64, String> {
    let a = &call.args;
    let act = match (call.name.as_str(), a.len()) {
        ("logistic", 3) => Activation64::logistic(a[0], a[1], a[2]),
        ("clamp", 3) => Activation64::clamp(a[0], a[1], a[2]),
        ("linear", 2) => Activation64::linear(a[0], a[1]),
        ("relu", 0) => Activation64::Relu,
        _ => {
            return Err(format!(
                "expected logistic(max, steepness, threshold), clamp(slope, lo, hi), linear(slope, offset) or relu, got '{}'",
                fmt_call(&call.name, a)
            ))
        }
    };
    act.validate().map_err(|e| e.to_string())?;
    Ok(act)
}

fn activation_canonical(a: &Activation64) -> String {
    match *a {
        Activation64::Logistic {
            max,
            steepness,
            threshold,
        } => fmt_call("logistic", &[max, steepness, threshold]),
        Activation64::Clamp { slope, lo, hi } => fmt_call("clamp", &[slope, lo, hi]),
        Activation64::Linear { slope, offset } => fmt_call("linear", &[slope, offset]),
        Activation64::Relu => "relu".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSection {
    /// `(lo, hi)` per axis.
    pub extent: Vec<(f64, f64)>,
    pub nodes: Vec<usize>,
    pub rule: QuadratureRule,
}

impl DomainSection {
    pub fn dim(&self) -> usize {
        self.extent.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSection {
    pub tau: FieldExpr,
    pub i_star: FieldExpr,
    pub activation: Activation64,
}

impl Default for PopulationSection {
    fn default() -> Self {
        Self {
            tau: FieldExpr::Constant(1.0),
            i_star: FieldExpr::Constant(0.0),
            activation: Activation64::standard_logistic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySection {
    pub family: DelayFamily,
    /// Declared `d̄`; when absent the largest sampled delay is used.
    pub d_bar: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlMode {
    OpenLoop,
    Proportional { k: f64 },
    PropInt { k_p: f64, k_i: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSection {
    pub mode: ControlMode,
    pub alpha: FieldExpr,
    pub z_ref: FieldExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSection {
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
    pub stride: usize,
    pub prehistory: [FieldExpr; 2],
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 10.0,
            method: Method::Euler,
            stride: 1,
            prehistory: [FieldExpr::Constant(0.0), FieldExpr::Constant(0.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub domain: DomainSection,
    pub populations: [PopulationSection; 2],
    /// `kernels[i][j]` couples source `j` into target `i`.
    pub kernels: [[KernelFamily; 2]; 2],
    pub delays: [DelaySection; 2],
    pub control: ControlSection,
    pub solver: SolverOptions<f64>,
    pub simulation: SimulationSection,
}

/// Parsed configuration plus the line each key came from.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    lines: BTreeMap<String, usize>,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Self {
        Self {
            config,
            lines: BTreeMap::new(),
        }
    }

    /// Error about `key`, with its line when it came from a file.
    pub fn error(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        match self.lines.get(key) {
            Some(&line) => ConfigError::Value {
                line,
                key: key.into(),
                msg: msg.into(),
            },
            None => ConfigError::Missing {
                key: key.into(),
                msg: msg.into(),
            },
        }
    }
}

const SECTIONS: &[&str] = &[
    "domain",
    "population.1",
    "population.2",
    "kernel.11",
    "kernel.12",
    "kernel.21",
    "kernel.22",
    "delay.1",
    "delay.2",
    "control",
    "solver",
    "simulation",
];

fn allowed_keys(section: &str) -> &'static [&'static str] {
    match section {
        "domain" => &["dim", "extent", "nodes", "rule"],
        "population.1" | "population.2" => &["tau", "I_star", "activation"],
        s if s.starts_with("kernel.") => &["family"],
        s if s.starts_with("delay.") => &["family", "d_bar"],
        "control" => &["mode", "k", "k_P", "k_I", "alpha", "z_ref"],
        "solver" => &[
            "max_iterations",
            "tol",
            "damping",
            "anderson_depth",
            "inner_tol",
            "multistart",
            "seed",
            "contraction_samples",
        ],
        "simulation" => &["dt", "t_end", "method", "stride", "prehistory.1", "prehistory.2"],
        _ => &[],
    }
}

type Entries = BTreeMap<String, (String, usize)>;

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = Entries::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(inner) = content.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    msg: format!("malformed section header '{content}'"),
                })?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("unknown section [{name}]"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            msg: format!("expected 'key = value', got '{content}'"),
        })?;
        let key = key.trim();
        let sec = section.as_deref().ok_or_else(|| ConfigError::Syntax {
            line,
            msg: format!("key '{key}' outside of any section"),
        })?;
        if !allowed_keys(sec).contains(&key) {
            return Err(ConfigError::Syntax {
                line,
                msg: format!("unknown key '{key}' in [{sec}]"),
            });
        }
        let full = format!("{sec}.{key}");
        if let Some((_, first)) = entries.get(&full) {
            return Err(ConfigError::Syntax {
                line,
                msg: format!("duplicate key '{full}' (first set on line {first})"),
            });
        }
        entries.insert(full, (value.trim().to_string(), line));
    }
    Ok(entries)
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        match self.get(key) {
            Some((_, line)) => ConfigError::Value {
                line,
                key: key.into(),
                msg: msg.into(),
            },
            None => ConfigError::Missing {
                key: key.into(),
                msg: msg.into(),
            },
        }
    }

    fn with<R>(&self, key: &str, default: R, f: impl FnOnce(&str) -> Result<R, String>) -> Result<R, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some((v, _)) => f(v).map_err(|msg| self.err(key, msg)),
        }
    }

    fn number(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.with(key, default, parse_number)
    }

    fn count(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.with(key, default, |v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("'{}' is not a non-negative integer", v.trim()))
        })
    }

    fn field(&self, key: &str, dim: usize, default: FieldExpr) -> Result<FieldExpr, ConfigError> {
        self.with(key, default, |v| FieldExpr::parse(&parse_call(v)?, dim))
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
        let entries = tokenize(text)?;
        let lines = entries.iter().map(|(k, (_, l))| (k.clone(), *l)).collect();
        let r = Reader { entries };

        // domain
        let dim = r.count("domain.dim", 1)?;
        if dim != 1 && dim != 2 {
            return Err(r.err("domain.dim", "dim must be 1 or 2"));
        }
        let extent = match r.get("domain.extent") {
            None => return Err(r.err("domain.extent", "required")),
            Some((v, _)) => parse_list(v).map_err(|m| r.err("domain.extent", m))?,
        };
        if extent.len() != 2 * dim {
            return Err(r.err("domain.extent", format!("expected {} numbers for dim = {dim}", 2 * dim)));
        }
        let extent: Vec<(f64, f64)> = extent.chunks(2).map(|c| (c[0], c[1])).collect();
        if let Some((lo, hi)) = extent.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(r.err("domain.extent", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        let nodes = match r.get("domain.nodes") {
            None => return Err(r.err("domain.nodes", "required")),
            Some((v, _)) => v
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| r.err("domain.nodes", format!("'{v}' is not a list of node counts")))?,
        };
        if nodes.len() != dim {
            return Err(r.err("domain.nodes", format!("expected {dim} node count(s)")));
        }
        if nodes.iter().any(|&n| n < 2) {
            return Err(r.err("domain.nodes", "every axis needs at least 2 nodes"));
        }
        let rule = r.with("domain.rule", QuadratureRule::Trapezoid, |v| match v {
            "trapezoid" => Ok(QuadratureRule::Trapezoid),
            "midpoint" => Ok(QuadratureRule::Midpoint),
            other => Err(format!("unknown rule '{other}' (midpoint or trapezoid)")),
        })?;

        // populations
        let mut populations: [PopulationSection; 2] = Default::default();
        for (p, pop) in populations.iter_mut().enumerate() {
            let sec = format!("population.{}", p + 1);
            let key = |k: &str| format!("{sec}.{k}");
            pop.tau = r.field(&key("tau"), dim, FieldExpr::Constant(1.0))?;
            pop.i_star = r.field(&key("I_star"), dim, FieldExpr::Constant(0.0))?;
            pop.activation = r.with(&key("activation"), Activation64::standard_logistic(), |v| {
                parse_activation(&parse_call(v)?)
            })?;
        }

        let mut kernels: [[KernelFamily; 2]; 2] = Default::default();
        for (i, row) in kernels.iter_mut().enumerate() {
            for (j, k) in row.iter_mut().enumerate() {
                let key = format!("kernel.{}{}.family", i + 1, j + 1);
                *k = r.with(&key, KernelFamily::Zero, |v| KernelFamily::parse(&parse_call(v)?))?;
            }
        }

        let mut delays: [DelaySection; 2] = Default::default();
        for (j, d) in delays.iter_mut().enumerate() {
            let key = |k: &str| format!("delay.{}.{k}", j + 1);
            d.family = r.with(&key("family"), DelayFamily::Zero, |v| DelayFamily::parse(&parse_call(v)?))?;
            d.d_bar = r.with(&key("d_bar"), None, |v| {
                let x = parse_number(v)?;
                if x < 0.0 {
                    Err("d_bar must be >= 0".into())
                } else {
                    Ok(Some(x))
                }
            })?;
            if let (DelayFamily::Constant(c), Some(cap)) = (&d.family, d.d_bar) {
                if *c > cap {
                    return Err(r.err(&key("family"), format!("constant delay {c} exceeds d_bar = {cap}")));
                }
            }
        }

        // control
        let gain = |key: &str| -> Result<Option<f64>, ConfigError> {
            match r.get(key) {
                None => Ok(None),
                Some(_) => {
                    let v = r.number(key, 0.0)?;
                    if v < 0.0 {
                        Err(r.err(key, "gains must be >= 0"))
                    } else {
                        Ok(Some(v))
                    }
                }
            }
        };
        let (k, kp, ki) = (gain("control.k")?, gain("control.k_P")?, gain("control.k_I")?);
        let mode_name = r.get("control.mode").map_or("open_loop", |(v, _)| v);
        let unused = |key: &str, present: bool| -> Result<(), ConfigError> {
            if present {
                Err(r.err(key, format!("not used by mode {mode_name}")))
            } else {
                Ok(())
            }
        };
        let mode = match mode_name {
            "open_loop" => {
                unused("control.k", k.is_some())?;
                unused("control.k_P", kp.is_some())?;
                unused("control.k_I", ki.is_some())?;
                ControlMode::OpenLoop
            }
            "proportional" => {
                unused("control.k_P", kp.is_some())?;
                unused("control.k_I", ki.is_some())?;
                ControlMode::Proportional {
                    k: k.ok_or_else(|| r.err("control.k", "required for mode proportional"))?,
                }
            }
            "prop_int" => {
                unused("control.k", k.is_some())?;
                ControlMode::PropInt {
                    k_p: kp.ok_or_else(|| r.err("control.k_P", "required for mode prop_int"))?,
                    k_i: ki.ok_or_else(|| r.err("control.k_I", "required for mode prop_int"))?,
                }
            }
            other => {
                return Err(r.err(
                    "control.mode",
                    format!("unknown mode '{other}' (open_loop, proportional or prop_int)"),
                ))
            }
        };
        let control = ControlSection {
            mode,
            alpha: r.field("control.alpha", dim, FieldExpr::Constant(1.0))?,
            z_ref: r.field("control.z_ref", dim, FieldExpr::Constant(0.0))?,
        };

        // solver
        let d = SolverOptions::<f64>::default();
        let solver = SolverOptions {
            max_iterations: r.count("solver.max_iterations", d.max_iterations)?,
            tol: r.number("solver.tol", d.tol)?,
            damping: r.number("solver.damping", d.damping)?,
            anderson_depth: r.count("solver.anderson_depth", d.anderson_depth)?,
            inner_tol: r.with("solver.inner_tol", None, |v| parse_number(v).map(Some))?,
            multistart: r.count("solver.multistart", d.multistart)?,
            seed: r.with("solver.seed", d.seed, |v| {
                v.trim().parse::<u64>().map_err(|_| format!("'{}' is not a seed", v.trim()))
            })?,
            contraction_samples: r.count("solver.contraction_samples", d.contraction_samples)?,
        };
        check_solver(&solver, |k, m| r.err(k, m))?;

        // simulation
        let sd = SimulationSection::default();
        let simulation = SimulationSection {
            dt: r.number("simulation.dt", sd.dt)?,
            t_end: r.number("simulation.t_end", sd.t_end)?,
            method: r.with("simulation.method", sd.method, |v| {
                Method::parse(v).ok_or_else(|| format!("unknown method '{v}' (euler or heun)"))
            })?,
            stride: r.count("simulation.stride", sd.stride)?,
            prehistory: [
                r.field("simulation.prehistory.1", dim, FieldExpr::Constant(0.0))?,
                r.field("simulation.prehistory.2", dim, FieldExpr::Constant(0.0))?,
            ],
        };
        check_simulation(&simulation, |k, m| r.err(k, m))?;

        let config = ScenarioConfig {
            domain: DomainSection { extent, nodes, rule },
            populations,
            kernels,
            delays,
            control,
            solver,
            simulation,
        };
        Ok(Scenario { config, lines })
    }

    /// Every key, fixed section order, numbers in shortest round-trip form.
    pub fn to_canonical(&self) -> String {
        let mut s = String::new();
        let d = &self.domain;
        let ext: Vec<String> = d.extent.iter().flat_map(|&(a, b)| [fmt_f64(a), fmt_f64(b)]).collect();
        let nodes: Vec<String> = d.nodes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "[domain]");
        let _ = writeln!(s, "dim = {}", d.dim());
        let _ = writeln!(s, "extent = {}", ext.join(", "));
        let _ = writeln!(s, "nodes = {}", nodes.join(", "));
        let _ = writeln!(s, "rule = {}", d.rule.name());
        for (p, pop) in self.populations.iter().enumerate() {
            let _ = writeln!(s, "\n[population.{}]", p + 1);
            let _ = writeln!(s, "tau = {}", pop.tau.canonical());
            let _ = writeln!(s, "I_star = {}", pop.i_star.canonical());
            let _ = writeln!(s, "activation = {}", activation_canonical(&pop.activation));
        }
        for (i, row) in self.kernels.iter().enumerate() {
            for (j, k) in row.iter().enumerate() {
                let _ = writeln!(s, "\n[kernel.{}{}]", i + 1, j + 1);
                let _ = writeln!(s, "family = {}", k.canonical());
            }
        }
        for (j, del) in self.delays.iter().enumerate() {
            let _ = writeln!(s, "\n[delay.{}]", j + 1);
            let _ = writeln!(s, "family = {}", del.family.canonical());
            if let Some(c) = del.d_bar {
                let _ = writeln!(s, "d_bar = {}", fmt_f64(c));
            }
        }
        let c = &self.control;
        let _ = writeln!(s, "\n[control]");
        match c.mode {
            ControlMode::OpenLoop => {
                let _ = writeln!(s, "mode = open_loop");
            }
            ControlMode::Proportional { k } => {
                let _ = writeln!(s, "mode = proportional\nk = {}", fmt_f64(k));
            }
            ControlMode::PropInt { k_p, k_i } => {
                let _ = writeln!(s, "mode = prop_int\nk_P = {}\nk_I = {}", fmt_f64(k_p), fmt_f64(k_i));
            }
        }
        let _ = writeln!(s, "alpha = {}", c.alpha.canonical());
        let _ = writeln!(s, "z_ref = {}", c.z_ref.canonical());

        let o = &self.solver;
        let _ = writeln!(s, "\n[solver]");
        let _ = writeln!(s, "max_iterations = {}", o.max_iterations);
        let _ = writeln!(s, "tol = {}", fmt_f64(o.tol));
        let _ = writeln!(s, "damping = {}", fmt_f64(o.damping));
        let _ = writeln!(s, "anderson_depth = {}", o.anderson_depth);
        if let Some(t) = o.inner_tol {
            let _ = writeln!(s, "inner_tol = {}", fmt_f64(t));
        }
        let _ = writeln!(s, "multistart = {}", o.multistart);
        let _ = writeln!(s, "seed = {}", o.seed);
        let _ = writeln!(s, "contraction_samples = {}", o.contraction_samples);

        let m = &self.simulation;
        let _ = writeln!(s, "\n[simulation]");
        let _ = writeln!(s, "dt = {}", fmt_f64(m.dt));
        let _ = writeln!(s, "t_end = {}", fmt_f64(m.t_end));
        let _ = writeln!(s, "method = {}", m.method.name());
        let _ = writeln!(s, "stride = {}", m.stride);
        let _ = writeln!(s, "prehistory.1 = {}", m.prehistory[0].canonical());
        let _ = writeln!(s, "prehistory.2 = {}", m.prehistory[1].canonical());
        s
    }

    /// Sets a numeric parameter by its dotted key; `control.k` switches an
    /// open-loop scenario to proportional control.
    /// Leaves `self` untouched on error.
    pub fn set_number(&mut self, key: &str, value: f64) -> Result<(), ConfigError> {
        let mut next = self.clone();
        next.apply_number(key, value)?;
        *self = next;
        Ok(())
    }

    fn apply_number(&mut self, key: &str, value: f64) -> Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::Missing { key: key.into(), msg };
        let count = |v: f64| -> Result<usize, ConfigError> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(bad(format!("{v} is not a non-negative integer")))
            }
        };
        let gain = |v: f64| if v >= 0.0 && v.is_finite() { Ok(v) } else { Err(bad("gains must be >= 0".into())) };
        match key {
            "control.k" => match &mut self.control.mode {
                ControlMode::PropInt { .. } => return Err(bad("scenario uses prop_int; sweep control.k_P".into())),
                mode => *mode = ControlMode::Proportional { k: gain(value)? },
            },
            "control.k_P" | "control.k_I" => match &mut self.control.mode {
                ControlMode::PropInt { k_p, k_i } => {
                    if key == "control.k_P" {
                        *k_p = gain(value)?;
                    } else {
                        *k_i = gain(value)?;
                    }
                }
                _ => return Err(bad("scenario does not use prop_int".into())),
            },
            "solver.tol" => self.solver.tol = value,
            "solver.damping" => self.solver.damping = value,
            "solver.anderson_depth" => self.solver.anderson_depth = count(value)?,
            "solver.max_iterations" => self.solver.max_iterations = count(value)?,
            "simulation.dt" => self.simulation.dt = value,
            "simulation.t_end" => self.simulation.t_end = value,
            _ => return Err(bad(format!("not a sweepable key (one of {})", SWEEP_KEYS.join(", ")))),
        }
        check_solver(&self.solver, |k, m| ConfigError::Missing {
            key: k.into(),
            msg: m.into(),
        })?;
        check_simulation(&self.simulation, |k, m| ConfigError::Missing {
            key: k.into(),
            msg: m.into(),
        })
    }
}

pub const SWEEP_KEYS: &[&str] = &[
    "control.k",
    "control.k_P",
    "control.k_I",
    "solver.tol",
    "solver.damping",
    "solver.anderson_depth",
    "solver.max_iterations",
    "simulation.dt",
    "simulation.t_end",
];

fn check_solver(o: &SolverOptions<f64>, err: impl Fn(&str, &str) -> ConfigError) -> Result<(), ConfigError> {
    if !(o.tol > 0.0) {
        return Err(err("solver.tol", "must be > 0"));
    }
    if !(o.damping > 0.0 && o.damping <= 1.0) {
        return Err(err("solver.damping", "must lie in (0, 1]"));
    }
    if o.inner_tol.is_some_and(|t| !(t > 0.0)) {
        return Err(err("solver.inner_tol", "must be > 0"));
    }
    if o.max_iterations == 0 {
        return Err(err("solver.max_iterations", "must be >= 1"));
    }
    if o.multistart == 0 {
        return Err(err("solver.multistart", "must be >= 1"));
    }
    if o.contraction_samples == 1 {
        return Err(err("solver.contraction_samples", "must be 0 (off) or >= 2"));
    }
    Ok(())
}

fn check_simulation(s: &SimulationSection, err: impl Fn(&str, &str) -> ConfigError) -> Result<(), ConfigError> {
    if !(s.dt > 0.0) {
        return Err(err("simulation.dt", "must be > 0"));
    }
    if !(s.t_end >= s.dt) {
        return Err(err("simulation.t_end", "must be >= dt"));
    }
    if s.stride == 0 {
        return Err(err("simulation.stride", "must be >= 1"));
    }
    Ok(())
}


impl Default for DelaySection {
    fn default() -> Self {
        Self {
            family: DelayFamily::Zero,
            d_bar: None,
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlMode::OpenLoop => f.write_str("open_loop"),
            ControlMode::Proportional { .. } => f.write_str("proportional"),
            ControlMode::PropInt { .. } => f.write_str("prop_int"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[domain]\nextent = 0, 1\nnodes = 5\n";

    #[test]
    fn calls_and_numbers() {
        assert_eq!(parse_call("2.5").unwrap(), Call { name: "constant".into(), args: vec![2.5] });
        assert_eq!(parse_call("relu").unwrap().args, Vec::<f64>::new());
        assert_eq!(parse_call(" gaussian( 1, 0.5 ) ").unwrap().args, vec![1.0, 0.5]);
        assert!(parse_call("gaussian(1, x)").is_err());
        assert!(parse_call("gaussian(1").is_err());
        assert!(parse_number("inf").is_err());
    }

    #[test]
    fn minimal_defaults() {
        let s = ScenarioConfig::parse(MINIMAL).unwrap();
        let c = &s.config;
        assert_eq!(c.domain.nodes, vec![5]);
        assert_eq!(c.domain.rule, QuadratureRule::Trapezoid);
        assert_eq!(c.control.mode, ControlMode::OpenLoop);
        assert_eq!(c.solver, SolverOptions::default());
        assert_eq!(c.kernels[1][0], KernelFamily::Zero);
    }

    #[test]
    fn errors_carry_lines_and_keys() {
        let text = "[domain]\nextent = 0, 1\nnodes = 5\n\n[population.2]\ntau = constant(1)\nbogus = 3\n";
        let e = ScenarioConfig::parse(text).unwrap_err();
        assert_eq!(e.to_string(), "line 7: unknown key 'bogus' in [population.2]");

        let text = "[domain]\nextent = 0, 1\nnodes = 5\n[population.1]\nactivation = clamp(1, 2, 1)\n";
        let e = ScenarioConfig::parse(text).unwrap_err();
        assert!(matches!(e, ConfigError::Value { line: 5, .. }), "{e}");
        assert!(e.to_string().contains("population.1.activation"));

        assert!(ScenarioConfig::parse("[domain]\nnodes = 5\n").unwrap_err().to_string().contains("domain.extent"));
        assert!(ScenarioConfig::parse("[nope]\n").is_err());
        assert!(ScenarioConfig::parse("x = 1\n").is_err());
        let dup = format!("{MINIMAL}nodes = 7\n");
        assert!(ScenarioConfig::parse(&dup).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn control_modes_checked() {
        let with = |ctl: &str| ScenarioConfig::parse(&format!("{MINIMAL}[control]\n{ctl}"));
        assert_eq!(
            with("mode = proportional\nk = 2\n").unwrap().config.control.mode,
            ControlMode::Proportional { k: 2.0 }
        );
        assert!(with("mode = proportional\n").is_err());
        assert!(with("k = 2\n").is_err());
        assert!(with("mode = prop_int\nk_P = 1\n").is_err());
        assert!(with("mode = proportional\nk = -1\n").is_err());
        assert!(with("mode = pid\n").is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let text = "\
[domain]
dim = 2
extent = 0, 1, -0.5, 0.5
nodes = 4, 3
rule = midpoint
[population.1]
tau = affine(1, 0.1, 0.2)
I_star = gaussian(0.3, 0.5, 0, 0.1)
activation = clamp(0.5, -1, 2)
[population.2]
activation = linear(0.3, 0.1)
[kernel.12]
family = mexican_hat(1, 0.1, 0.5, 0.3)
[delay.2]
family = distance_proportional(0.7)
d_bar = 0.4
[control]
mode = prop_int
k_P = 0.1
k_I = 3
z_ref = 0.1
[solver]
tol = 1e-12
inner_tol = 1e-15
seed = 7
[simulation]
method = heun
prehistory.2 = affine(0.1, 0, 1e-3)
";
        let a = ScenarioConfig::parse(text).unwrap().config;
        let canon = a.to_canonical();
        let b = ScenarioConfig::parse(&canon).unwrap().config;
        assert_eq!(a, b);
        assert_eq!(canon, b.to_canonical());
    }

    #[test]
    fn sweep_keys() {
        let mut c = ScenarioConfig::parse(MINIMAL).unwrap().config;
        c.set_number("control.k", 10.0).unwrap();
        assert_eq!(c.control.mode, ControlMode::Proportional { k: 10.0 });
        assert!(c.set_number("control.k_I", 1.0).is_err());
        assert!(c.set_number("solver.damping", 2.0).is_err());
        assert!(c.set_number("domain.nodes", 3.0).is_err());
        c.set_number("solver.anderson_depth", 0.0).unwrap();
        assert_eq!(c.solver.anderson_depth, 0);
    }

    #[test]
    fn field_expressions() {
        let g = FieldExpr::parse(&parse_call("gaussian(2, 0.5, 0.1, 1)").unwrap(), 1).unwrap();
        assert_eq!(g.eval(&[0.5]), 3.0);
        let a = FieldExpr::parse(&parse_call("affine(1, 2, 3)").unwrap(), 2).unwrap();
        assert_eq!(a.eval(&[1.0, 1.0]), 6.0);
        assert!(FieldExpr::parse(&parse_call("affine(1, 2, 3)").unwrap(), 1).is_err());
        assert!(FieldExpr::parse(&parse_call("gaussian(1, 0, 0)").unwrap(), 1).is_err());
    }
}
