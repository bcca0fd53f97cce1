//! Fixed-step integration of the delayed closed loop
//!
//! ```text
//! τ_i ∂z_i/∂t = −z_i + S_i(I_i* + [i = 1] α u + Σ_j ∫ w_ij(r, r′) z_j(r′, t − d_j(r, r′)) dr′)
//! ```
//!
//! with `u = 0` (open loop), `u = −k (z₁ − z_ref)` or
//! `u = −k_P (z₁ − z_ref) − k_I y₁`, `ẏ₁ = z₁ − z_ref`, plus an optional
//! external signal. Delayed states come from a [`HistoryBuffer`].

mod history;
mod probe;

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Field, FieldPair, POPULATIONS};
use crate::model::{Controller, NeuralFieldModel};
use crate::scalar::Real;

pub use history::HistoryBuffer;
pub use probe::{probe_convergence, ProbeOptions, ProbeReport};

/// Any state component above this magnitude aborts the run.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SimError<T: Real> {
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
    #[error("delayed lookup at t = {time} precedes the oldest stored state ({oldest})")]
    HistoryUnderflow { time: f64, oldest: f64 },
    #[error("state left [-1e12, 1e12] at t = {time}")]
    NonFiniteState { time: f64, partial: Box<SimulationResult<T>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euler,
    Heun,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Heun => "heun",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euler" => Some(Method::Euler),
            "heun" => Some(Method::Heun),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimWarning {
    /// `Δt > d̄ > 0`.
    StepExceedsDelay,
}

impl fmt::Display for SimWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimWarning::StepExceedsDelay => f.write_str("dt_exceeds_max_delay"),
        }
    }
}

/// External input `u(t, node)` added to the feedback term.
pub type InputSignal<T> = Arc<dyn Fn(T, usize) -> T + Send + Sync>;

#[derive(Clone)]
pub struct SimulationConfig<T> {
    pub t_end: T,
    pub dt: T,
    pub method: Method,
    /// Keep every `stride`-th step (the last step is always kept).
    pub stride: usize,
    /// Constant history on `t ≤ 0`; also the initial state.
    pub prehistory: FieldPair<T>,
    /// Initial integrator state for PI control; zero when absent.
    pub integrator: Option<Field<T>>,
    /// Pair used for the distance diagnostic.
    pub reference: Option<FieldPair<T>>,
    pub input: Option<InputSignal<T>>,
}

impl<T: Real> SimulationConfig<T> {
    pub fn new(prehistory: FieldPair<T>, t_end: T, dt: T) -> Self {
        Self {
            t_end,
            dt,
            method: Method::Euler,
            stride: 1,
            prehistory,
            integrator: None,
            reference: None,
            input: None,
        }
    }

    pub fn method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn reference(mut self, reference: FieldPair<T>) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn integrator(mut self, y1: Field<T>) -> Self {
        self.integrator = Some(y1);
        self
    }

    pub fn input(mut self, input: InputSignal<T>) -> Self {
        self.input = Some(input);
        self
    }

    /// Number of steps: `t_end / Δt` rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().to_usize().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult<T> {
    pub times: Vec<T>,
    pub states: Vec<FieldPair<T>>,
    /// `y₁` per sample under PI control, otherwise empty.
    pub integrator: Vec<Field<T>>,
    /// `‖z − reference‖` per sample when a reference was supplied.
    pub distance_to_reference: Option<Vec<T>>,
    /// `‖z₁ − z_ref‖` per sample.
    pub tracking_error: Vec<T>,
    pub method: Method,
    pub dt: T,
    pub warnings: Vec<SimWarning>,
}

impl<T: Real> SimulationResult<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &FieldPair<T> {
        self.states.last().expect("at least the initial sample")
    }

    pub fn max_distance_to_reference(&self) -> Option<T> {
        self.distance_to_reference
            .as_ref()
            .map(|d| d.iter().fold(T::zero(), |m, &v| m.max(v)))
    }

    /// One row per sample: `t`, `z1_*`, `z2_*`, `y1_*` (PI only),
    /// `distance_to_reference` (`nan` without a reference), `tracking_error`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.domain().len());
        let pi = !self.integrator.is_empty();
        let mut header = vec!["t".to_string()];
        for p in 1..=POPULATIONS {
            header.extend((0..n).map(|a| format!("z{p}_{a}")));
        }
        if pi {
            header.extend((0..n).map(|a| format!("y1_{a}")));
        }
        header.push("distance_to_reference".into());
        header.push("tracking_error".into());
        writeln!(w, "{}", header.join(","))?;

        for (k, (t, state)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row = vec![fmt_num(*t)];
            row.extend(state.stacked().into_iter().map(fmt_num));
            if pi {
                row.extend(self.integrator[k].values().iter().map(|&v| fmt_num(v)));
            }
            row.push(match &self.distance_to_reference {
                Some(d) => fmt_num(d[k]),
                None => "nan".into(),
            });
            row.push(fmt_num(self.tracking_error[k]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip `f64`.
pub fn fmt_num<T: Real>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

// Time derivatives of the stacked state `[z₁; z₂]` and of `y₁`.
struct Rhs<'a, T> {
    model: &'a NeuralFieldModel<T>,
    input: Option<&'a InputSignal<T>>,
    n: usize,
}

impl<'a, T: Real> Rhs<'a, T> {
    fn new(model: &'a NeuralFieldModel<T>, input: Option<&'a InputSignal<T>>) -> Self {
        Self {
            model,
            input,
            n: model.domain().len(),
        }
    }

    fn eval(
        &self,
        t: T,
        head: &[T],
        y1: &[T],
        history: &HistoryBuffer<T>,
        dz: &mut [T],
        dy: &mut [T],
    ) -> Result<(), SimError<T>> {
        let m = self.model;
        let n = self.n;
        let k = m.controller().proportional_gain();
        let ki = m.controller().integral_gain();
        let alpha = m.alpha().values();
        let z_ref = m.z_ref().values();

        for i in 0..POPULATIONS {
            let s = m.activation(i);
            let input = m.input(i).values();
            let tau = m.tau(i).values();
            for a in 0..n {
                let mut sums = [T::zero(); POPULATIONS];
                for (j, acc) in sums.iter_mut().enumerate() {
                    let row = m.kernel(i, j).row(a);
                    let delays = m.delay(j);
                    if delays.is_zero() {
                        for (b, &w) in row.iter().enumerate() {
                            *acc += w * head[j * n + b];
                        }
                    } else {
                        let d = delays.row(a);
                        for (b, &w) in row.iter().enumerate() {
                            let v = history.value(j * n + b, t - d[b], Some((t, head)))?;
                            *acc += w * v;
                        }
                    }
                }
                let coupling = sums[0] + sums[1];
                let mut arg = input[a];
                if i == 0 {
                    arg -= k * alpha[a] * (head[a] - z_ref[a]);
                    if let Some(ki) = ki {
                        arg -= alpha[a] * (ki * y1[a]);
                    }
                    if let Some(u) = self.input {
                        arg += alpha[a] * u(t, a);
                    }
                }
                arg += coupling;
                dz[i * n + a] = (-head[i * n + a] + s.eval(arg)) / tau[a];
            }
        }
        if ki.is_some() {
            for a in 0..n {
                dy[a] = head[a] - z_ref[a];
            }
        }
        Ok(())
    }
}

/// Right-hand side at time `t` for the state `current` (taken as the value
/// at `t`) with delayed values from `history`. Returns `(∂z/∂t, ẏ₁)`; the
/// latter only under PI control.
pub fn rhs<T: Real>(
    model: &NeuralFieldModel<T>,
    t: T,
    current: &FieldPair<T>,
    integrator: Option<&Field<T>>,
    history: &HistoryBuffer<T>,
    input: Option<&InputSignal<T>>,
) -> Result<(FieldPair<T>, Option<Field<T>>), SimError<T>> {
    let n = model.domain().len();
    let head = current.stacked();
    let y1 = integrator.map_or_else(|| vec![T::zero(); n], |f| f.values().to_vec());
    let mut dz = vec![T::zero(); 2 * n];
    let mut dy = vec![T::zero(); n];
    Rhs::new(model, input).eval(t, &head, &y1, history, &mut dz, &mut dy)?;
    let dz = FieldPair::from_stacked(model.domain(), &dz).expect("stacked length");
    let dy = model
        .controller()
        .has_integrator()
        .then(|| Field::from_values(model.domain(), dy).expect("node count"));
    Ok((dz, dy))
}

fn validate<T: Real>(model: &NeuralFieldModel<T>, cfg: &SimulationConfig<T>) -> Result<(), SimError<T>> {
    let bad = |msg: &str| Err(SimError::InvalidConfig(msg.into()));
    if !(cfg.dt > T::zero()) || !cfg.dt.is_finite() {
        return bad("dt must be > 0");
    }
    if !(cfg.t_end >= cfg.dt) || !cfg.t_end.is_finite() {
        return bad("t_end must be >= dt");
    }
    if cfg.stride == 0 {
        return bad("stride must be >= 1");
    }
    let same = |p: &FieldPair<T>| p.domain().same_as(model.domain());
    if !same(&cfg.prehistory) || cfg.reference.as_ref().is_some_and(|r| !same(r)) {
        return bad("prehistory and reference must live on the model domain");
    }
    if !cfg.prehistory.is_finite() {
        return bad("prehistory must be finite");
    }
    if let Some(y) = &cfg.integrator {
        if !y.domain().same_as(model.domain()) || !y.is_finite() {
            return bad("integrator state must be finite and on the model domain");
        }
    }
    Ok(())
}

struct Recorder<'a, T> {
    model: &'a NeuralFieldModel<T>,
    reference: Option<&'a FieldPair<T>>,
    pi: bool,
    out: SimulationResult<T>,
}

impl<T: Real> Recorder<'_, T> {
    fn record(&mut self, t: T, z: &[T], y1: &[T]) {
        let domain = self.model.domain();
        let state = FieldPair::from_stacked(domain, z).expect("stacked length");
        if let (Some(r), Some(d)) = (self.reference, self.out.distance_to_reference.as_mut()) {
            d.push(state.distance(r).expect("same domain"));
        }
        let track = state.first().sub(self.model.z_ref()).expect("same domain").l2_norm();
        self.out.tracking_error.push(track);
        if self.pi {
            self.out
                .integrator
                .push(Field::from_values(domain, y1.to_vec()).expect("node count"));
        }
        self.out.states.push(state);
        self.out.times.push(t);
    }
}

/// Integrates the closed loop from the constant prehistory up to
/// `t_end` (rounded to a whole number of steps). Heun evaluates its
/// corrector at `t + Δt` against history interpolated towards the
/// predictor; the history receives one snapshot per step.
pub fn simulate<T: Real>(
    model: &NeuralFieldModel<T>,
    cfg: &SimulationConfig<T>,
) -> Result<SimulationResult<T>, SimError<T>> {
    validate(model, cfg)?;
    let n = model.domain().len();
    let dt = cfg.dt;
    let steps = cfg.steps();
    let pi = matches!(model.controller(), Controller::ProportionalIntegral { .. });
    let mut warnings = Vec::new();
    if model.max_delay() > T::zero() && dt > model.max_delay() {
        warnings.push(SimWarning::StepExceedsDelay);
    }

    let mut history = HistoryBuffer::new(&cfg.prehistory, dt, model.max_delay());
    let rhs = Rhs::new(model, cfg.input.as_ref());
    let mut z = cfg.prehistory.stacked();
    let mut y1 = cfg
        .integrator
        .as_ref()
        .map_or_else(|| vec![T::zero(); n], |f| f.values().to_vec());

    let mut rec = Recorder {
        model,
        reference: cfg.reference.as_ref(),
        pi,
        out: SimulationResult {
            times: Vec::new(),
            states: Vec::new(),
            integrator: Vec::new(),
            distance_to_reference: cfg.reference.as_ref().map(|_| Vec::new()),
            tracking_error: Vec::new(),
            method: cfg.method,
            dt,
            warnings,
        },
    };
    rec.record(T::zero(), &z, &y1);

    let mut k1 = vec![T::zero(); 2 * n];
    let mut l1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); 2 * n];
    let mut l2 = vec![T::zero(); n];
    let mut zp = vec![T::zero(); 2 * n];
    let mut yp = vec![T::zero(); n];
    let half = T::lit(0.5);
    let limit = T::lit(BLOW_UP_THRESHOLD);

    for step in 0..steps {
        let t = T::from_usize_lossy(step) * dt;
        let t_next = T::from_usize_lossy(step + 1) * dt;
        rhs.eval(t, &z, &y1, &history, &mut k1, &mut l1)?;
        match cfg.method {
            Method::Euler => {
                for (zi, &d) in z.iter_mut().zip(&k1) {
                    *zi += dt * d;
                }
                if pi {
                    for (yi, &d) in y1.iter_mut().zip(&l1) {
                        *yi += dt * d;
                    }
                }
            }
            Method::Heun => {
                for ((p, &zi), &d) in zp.iter_mut().zip(&z).zip(&k1) {
                    *p = zi + dt * d;
                }
                for ((p, &yi), &d) in yp.iter_mut().zip(&y1).zip(&l1) {
                    *p = yi + dt * d;
                }
                rhs.eval(t_next, &zp, &yp, &history, &mut k2, &mut l2)?;
                for ((zi, &a), &b) in z.iter_mut().zip(&k1).zip(&k2) {
                    *zi += dt * half * (a + b);
                }
                if pi {
                    for ((yi, &a), &b) in y1.iter_mut().zip(&l1).zip(&l2) {
                        *yi += dt * half * (a + b);
                    }
                }
            }
        }

        let blown = z.iter().chain(&y1).any(|v| !(v.abs() <= limit));
        if blown {
            rec.record(t_next, &z, &y1);
            return Err(SimError::NonFiniteState {
                time: t_next.as_f64(),
                partial: Box::new(rec.out),
            });
        }
        history.push(&z);
        if (step + 1) % cfg.stride == 0 || step + 1 == steps {
            rec.record(t_next, &z, &y1);
        }
    }
    Ok(rec.out)
}
