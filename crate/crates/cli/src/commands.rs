use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use fieldeq::simulate::{fmt_num, simulate as run_simulation, SimError, SimulationConfig, SimulationResult};
use fieldeq::solver::{
    solve_fixed_point, solve_pi_equilibrium, verify_equilibrium, EquilibriumResult, PiEquilibriumResult,
    SolveError, SolverOptions,
};
use fieldeq::{Domain64, Field64, FieldPair64, Model64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, Scenario, ScenarioConfig, SWEEP_KEYS};
use crate::output::{config_hash, KeyValues, Manifest, OutputDir};
use crate::{assemble, verify as checks, CliError, Common, EXIT_CHECKS_FAILED, EXIT_NON_FINITE, EXIT_NO_CONVERGENCE, EXIT_OK};

/// A scenario file with its model, ready to run.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub model: Model64,
    pub canonical: String,
}

impl Loaded {
    pub fn from_text(text: &str, seed: Option<u64>) -> Result<Self, ConfigError> {
        let mut scenario = ScenarioConfig::parse(text)?;
        if let Some(s) = seed {
            scenario.config.solver.seed = s;
        }
        Self::from_scenario(scenario)
    }

    pub fn from_scenario(scenario: Scenario) -> Result<Self, ConfigError> {
        let model = assemble::model(&scenario)?;
        let canonical = scenario.config.to_canonical();
        Ok(Self {
            scenario,
            model,
            canonical,
        })
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_text(&text, seed)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.scenario.config
    }

    pub fn seed(&self) -> u64 {
        self.config().solver.seed
    }

    fn manifest(&self, command: String) -> Manifest {
        Manifest {
            command,
            config_hash: config_hash(&self.canonical),
            seed: self.seed(),
        }
    }
}

/// Either kind of equilibrium, depending on the controller.
#[derive(Debug, Clone, PartialEq)]
pub enum Equilibrium {
    Static(EquilibriumResult<f64>),
    Pi(PiEquilibriumResult<f64>),
}

impl Equilibrium {
    pub fn converged(&self) -> bool {
        match self {
            Equilibrium::Static(r) => r.converged,
            Equilibrium::Pi(_) => true,
        }
    }

    pub fn z_star(&self) -> FieldPair64 {
        match self {
            Equilibrium::Static(r) => r.z_star.clone(),
            Equilibrium::Pi(r) => r.z_star(),
        }
    }

    /// `‖T(z*) − z*‖` for static feedback; the largest nodewise
    /// stationarity defect for PI feedback.
    pub fn residual(&self) -> f64 {
        match self {
            Equilibrium::Static(r) => r.residual_t,
            Equilibrium::Pi(r) => r.residual_z1.max(r.residual_z2),
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            Equilibrium::Static(r) => r.iterations,
            Equilibrium::Pi(r) => r.iterations,
        }
    }

    pub fn integrator(&self) -> Option<Field64> {
        match self {
            Equilibrium::Static(_) => None,
            Equilibrium::Pi(r) => Some(r.y1_star.clone()),
        }
    }
}

pub fn solve(model: &Model64, opts: &SolverOptions<f64>) -> Result<Equilibrium, SolveError> {
    if model.controller().has_integrator() {
        solve_pi_equilibrium(model, opts).map(Equilibrium::Pi)
    } else {
        solve_fixed_point(model, opts).map(Equilibrium::Static)
    }
}

fn coord_header(domain: &Domain64) -> String {
    (1..=domain.dim()).map(|d| format!(",r{d}")).collect()
}

fn coords(domain: &Domain64, a: usize) -> String {
    domain.point(a).iter().map(|&v| format!(",{}", fmt_num(v))).collect()
}

pub fn equilibrium_csv(domain: &Domain64, eq: &Equilibrium) -> String {
    let mut s = format!("node{}", coord_header(domain));
    match eq {
        Equilibrium::Static(r) => {
            s.push_str(",x1,x2,z1,z2\n");
            let (x, z) = (&r.x_star, &r.z_star);
            for a in 0..domain.len() {
                let _ = writeln!(
                    s,
                    "{a}{},{},{},{},{}",
                    coords(domain, a),
                    fmt_num(x.first().values()[a]),
                    fmt_num(x.second().values()[a]),
                    fmt_num(z.first().values()[a]),
                    fmt_num(z.second().values()[a])
                );
            }
        }
        Equilibrium::Pi(r) => {
            s.push_str(",z1,z2,y1\n");
            for a in 0..domain.len() {
                let _ = writeln!(
                    s,
                    "{a}{},{},{},{}",
                    coords(domain, a),
                    fmt_num(r.z1_star.values()[a]),
                    fmt_num(r.z2_star.values()[a]),
                    fmt_num(r.y1_star.values()[a])
                );
            }
        }
    }
    s
}

pub fn iterations_csv(eq: &Equilibrium) -> String {
    let log = match eq {
        Equilibrium::Static(r) => &r.log,
        Equilibrium::Pi(r) => &r.log,
    };
    let mut s = String::from("iteration,residual,step\n");
    for rec in log {
        let _ = writeln!(s, "{},{},{}", rec.iteration, fmt_num(rec.residual), fmt_num(rec.step));
    }
    s
}

pub fn equilibrium_summary(model: &Model64, eq: &Equilibrium) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.text("controller", controller_name(model));
    kv.flag("converged", eq.converged());
    kv.text("iterations", eq.iterations().to_string());
    kv.num("pair_norm_z", eq.z_star().pair_norm());
    match eq {
        Equilibrium::Static(r) => {
            let check = verify_equilibrium(model, &r.z_star);
            kv.text("start", r.start.to_string());
            kv.num("residual_T", r.residual_t);
            kv.num("residual_T_max_abs", check.max_abs);
            kv.num("residual_Tcal", r.residual_tcal);
            kv.opt_num("a_priori_bound", r.a_priori_bound);
            kv.text("within_bound", r.within_bound.map_or("none".into(), |b| b.to_string()));
            match &r.contraction {
                Some(c) => {
                    kv.num("contraction_ratio", c.ratio);
                    kv.text("contraction_note", c.label());
                }
                None => {
                    kv.text("contraction_ratio", "none");
                    kv.text("contraction_note", "not sampled");
                }
            }
            let warnings: Vec<String> = r.warnings.iter().map(|w| w.to_string()).collect();
            kv.text("warnings", warnings.join(";"));
        }
        Equilibrium::Pi(r) => {
            kv.num("residual_z1_max_abs", r.residual_z1);
            kv.num("residual_z2_max_abs", r.residual_z2);
            kv.num("y1_sup_norm", r.y1_star.sup_norm());
            kv.text("warnings", "");
        }
    }
    kv
}

fn controller_name(model: &Model64) -> &'static str {
    match model.controller() {
        fieldeq::Controller::OpenLoop => "open_loop",
        fieldeq::Controller::Proportional { .. } => "proportional",
        fieldeq::Controller::ProportionalIntegral { .. } => "prop_int",
    }
}

fn print_summary(common: &Common, kv: &KeyValues) {
    if common.quiet {
        return;
    }
    for (k, v) in kv.rows() {
        println!("{k:<24} {v}");
    }
}

fn failed_summary(command: &str, e: &SolveError) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.text("command", command);
    kv.flag("converged", false);
    kv.text("error", e.to_string().replace(',', ";"));
    kv
}

pub fn equilibrium(common: &Common) -> Result<i32, CliError> {
    let loaded = Loaded::load(&common.config, common.seed)?;
    let model = &loaded.model;
    let mut out = OutputDir::create(&common.out)?;
    out.write("scenario.ini", loaded.canonical.as_bytes())?;
    let manifest = loaded.manifest("equilibrium".into());

    let eq = match solve(model, &loaded.config().solver) {
        Ok(eq) => eq,
        Err(e @ SolveError::NonConvergence { .. }) => {
            out.write("summary.csv", failed_summary("equilibrium", &e).to_csv().as_bytes())?;
            out.finish(&manifest)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    out.write("equilibrium.csv", equilibrium_csv(model.domain(), &eq).as_bytes())?;
    out.write("iterations.csv", iterations_csv(&eq).as_bytes())?;
    let mut summary = KeyValues::new();
    summary.text("command", "equilibrium");
    for (k, v) in equilibrium_summary(model, &eq).rows() {
        summary.text(k, v.clone());
    }
    out.write("summary.csv", summary.to_csv().as_bytes())?;
    out.finish(&manifest)?;
    print_summary(common, &summary);
    if eq.converged() {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: equilibrium iteration did not converge; outputs hold the best iterate");
        Ok(EXIT_NO_CONVERGENCE)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimulateFlags {
    pub from_equilibrium: bool,
    pub prehistory: Option<PathBuf>,
    pub perturb: f64,
}

impl SimulateFlags {
    fn command(&self) -> String {
        let mut s = String::from("simulate");
        if self.from_equilibrium {
            s.push_str(" --from-equilibrium");
        }
        if let Some(p) = &self.prehistory {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            let _ = write!(s, " --prehistory {name}");
        }
        let _ = write!(s, " --perturb {:?}", self.perturb);
        s
    }
}

/// Reads the `z1` and `z2` columns of a per-node CSV (such as
/// `equilibrium.csv`).
pub fn read_prehistory(path: &Path, domain: &std::sync::Arc<Domain64>) -> Result<FieldPair64, CliError> {
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| bad(format!("missing column '{name}'")))
    };
    let (c1, c2) = (col("z1")?, col("z2")?);
    let mut z1 = Vec::new();
    let mut z2 = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |c: usize| -> Result<f64, CliError> {
            let cell = cells.get(c).ok_or_else(|| bad(format!("row {} is short", i + 2)))?;
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {}: '{cell}' is not a finite number", i + 2)))
        };
        z1.push(get(c1)?);
        z2.push(get(c2)?);
    }
    if z1.len() != domain.len() {
        return Err(bad(format!("{} rows for {} nodes", z1.len(), domain.len())));
    }
    let f = |v| Field64::from_values(domain, v).expect("length checked");
    Ok(FieldPair64::new(f(z1), f(z2)).expect("same domain"))
}

/// Seeded random pair with pair norm `scale`.
pub fn perturbation(domain: &std::sync::Arc<Domain64>, scale: f64, seed: u64) -> FieldPair64 {
    if scale == 0.0 {
        return FieldPair64::zeros(domain);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..2 * domain.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dir = FieldPair64::from_stacked(domain, &raw).expect("stacked length");
    dir.scale(scale / dir.pair_norm())
}

fn simulation_summary(run: &SimulationResult<f64>, status: &str) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.text("status", status);
    kv.text("method", run.method.name());
    kv.num("dt", run.dt);
    kv.text("samples", run.len().to_string());
    kv.num("t_final", *run.times.last().expect("initial sample"));
    kv.opt_num("max_distance_to_reference", run.max_distance_to_reference());
    kv.opt_num(
        "final_distance_to_reference",
        run.distance_to_reference.as_ref().and_then(|d| d.last().copied()),
    );
    kv.num("final_tracking_error", *run.tracking_error.last().expect("initial sample"));
    let warnings: Vec<String> = run.warnings.iter().map(|w| w.to_string()).collect();
    kv.text("warnings", warnings.join(";"));
    kv
}

pub fn simulate(common: &Common, flags: &SimulateFlags) -> Result<i32, CliError> {
    if !(flags.perturb >= 0.0 && flags.perturb.is_finite()) {
        return Err(CliError::Usage("--perturb must be a finite value >= 0".into()));
    }
    let loaded = Loaded::load(&common.config, common.seed)?;
    let model = &loaded.model;
    let cfg = loaded.config();
    let domain = model.domain();
    let mut out = OutputDir::create(&common.out)?;
    out.write("scenario.ini", loaded.canonical.as_bytes())?;
    let manifest = loaded.manifest(flags.command());

    let mut summary = KeyValues::new();
    summary.text("command", "simulate");
    let (start, reference, integrator) = if flags.from_equilibrium {
        let eq = solve(model, &cfg.solver)?;
        summary.flag("equilibrium_converged", eq.converged());
        summary.num("equilibrium_residual", eq.residual());
        if !eq.converged() {
            out.write("summary.csv", summary.to_csv().as_bytes())?;
            out.finish(&manifest)?;
            eprintln!("error: equilibrium iteration did not converge; nothing simulated");
            return Ok(EXIT_NO_CONVERGENCE);
        }
        let z = eq.z_star();
        (z.clone(), Some(z), eq.integrator())
    } else if let Some(path) = &flags.prehistory {
        (read_prehistory(path, domain)?, None, None)
    } else {
        (assemble::prehistory(cfg, domain), None, None)
    };
    let start = start
        .add(&perturbation(domain, flags.perturb, loaded.seed()))
        .expect("same domain");

    let mut sim = SimulationConfig::new(start, cfg.simulation.t_end, cfg.simulation.dt)
        .method(cfg.simulation.method)
        .stride(cfg.simulation.stride);
    sim.reference = reference;
    sim.integrator = integrator;

    let (run, status, code) = match run_simulation(model, &sim) {
        Ok(run) => (run, "completed", EXIT_OK),
        Err(SimError::NonFiniteState { partial, time }) => {
            eprintln!("error: state blew up at t = {time}; partial trajectory written");
            (*partial, "non_finite_state", EXIT_NON_FINITE)
        }
        Err(e) => return Err(e.into()),
    };
    let mut csv = Vec::new();
    run.write_csv(&mut csv).map_err(|source| CliError::Io {
        path: out.path().join("trajectory.csv").display().to_string(),
        source,
    })?;
    out.write("trajectory.csv", &csv)?;
    for (k, v) in simulation_summary(&run, status).rows() {
        summary.text(k, v.clone());
    }
    out.write("summary.csv", summary.to_csv().as_bytes())?;
    out.finish(&manifest)?;
    print_summary(common, &summary);
    Ok(code)
}

/// One sweep row; `Err` when the solver raised an error.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: Result<Equilibrium, SolveError>,
}

/// Solves every point, spreading them over the available cores. Each point
/// owns its model and options, so the outcome does not depend on
/// scheduling.
pub fn run_sweep(base: &ScenarioConfig, param: &str, values: &[f64]) -> Result<Vec<SweepPoint>, CliError> {
    if !SWEEP_KEYS.contains(&param) {
        return Err(CliError::Usage(format!(
            "unknown sweep parameter '{param}' (one of {})",
            SWEEP_KEYS.join(", ")
        )));
    }
    let mut jobs = Vec::with_capacity(values.len());
    for &v in values {
        let mut cfg = base.clone();
        cfg.set_number(param, v)?;
        let loaded = Loaded::from_scenario(Scenario::new(cfg))?;
        jobs.push((v, loaded));
    }
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len()).max(1);
    let chunk = jobs.len().div_ceil(workers);
    let points = thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk.max(1))
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|(v, l)| SweepPoint {
                            value: *v,
                            outcome: solve(&l.model, &l.config().solver),
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    Ok(points)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("value,converged,residual_T,pair_norm_z,iterations\n");
    for p in points {
        let _ = match &p.outcome {
            Ok(eq) => writeln!(
                s,
                "{},{},{},{},{}",
                fmt_num(p.value),
                eq.converged(),
                fmt_num(eq.residual()),
                fmt_num(eq.z_star().pair_norm()),
                eq.iterations()
            ),
            Err(e) => {
                let (iters, res) = match e {
                    SolveError::NonConvergence { iterations, residual } => (*iterations, *residual),
                    _ => (0, f64::NAN),
                };
                writeln!(s, "{},false,{},nan,{iters}", fmt_num(p.value), fmt_num(res))
            }
        };
    }
    s
}

pub fn sweep(common: &Common, param: &str, values: &[f64]) -> Result<i32, CliError> {
    let loaded = Loaded::load(&common.config, common.seed)?;
    let points = run_sweep(loaded.config(), param, values)?;
    let mut out = OutputDir::create(&common.out)?;
    out.write("scenario.ini", loaded.canonical.as_bytes())?;
    let csv = sweep_csv(&points);
    out.write("sweep.csv", csv.as_bytes())?;
    let listed: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
    out.finish(&loaded.manifest(format!("sweep --param {param} --values {}", listed.join(","))))?;
    if !common.quiet {
        print!("{csv}");
    }
    for p in &points {
        if let Err(e) = &p.outcome {
            eprintln!("warning: {param} = {}: {e}", p.value);
        }
    }
    let all = points.iter().all(|p| p.outcome.as_ref().is_ok_and(Equilibrium::converged));
    Ok(if all { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

pub fn verify(common: &Common) -> Result<i32, CliError> {
    let loaded = Loaded::load(&common.config, common.seed)?;
    let results = checks::run_all(&loaded.model, loaded.config(), loaded.seed());
    let mut out = OutputDir::create(&common.out)?;
    out.write("scenario.ini", loaded.canonical.as_bytes())?;
    out.write("verify.csv", checks::to_csv(&results).as_bytes())?;
    out.finish(&loaded.manifest("verify".into()))?;
    if !common.quiet {
        print!("{}", checks::table(&results));
    }
    Ok(if results.iter().all(|c| c.passed) {
        EXIT_OK
    } else {
        EXIT_CHECKS_FAILED
    })
}
