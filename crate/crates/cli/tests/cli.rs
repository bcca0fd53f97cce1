use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn fieldeq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fieldeq")).args(args).output().expect("binary runs")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"];
    args.extend_from_slice(extra);
    fieldeq(&args)
}

fn summary(dir: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(dir.join("summary.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn num(map: &BTreeMap<String, String>, key: &str) -> f64 {
    map[key].parse().unwrap_or_else(|_| panic!("{key} = {}", map[key]))
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let c = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(c).unwrap().parse().unwrap()).collect()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.txt");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn decoupled_equilibrium_is_one_half() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("equilibrium", &scenario("decoupled.ini"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(tmp.path());
    assert!(num(&s, "residual_T") <= 1e-10);
    let eq = fs::read_to_string(tmp.path().join("equilibrium.csv")).unwrap();
    for col in ["z1", "z2"] {
        let z = column(&eq, col);
        assert_eq!(z.len(), 101);
        assert!(z.iter().all(|&v| v == 0.5), "{col}");
    }
    for f in ["equilibrium.csv", "iterations.csv", "summary.csv", "manifest.csv", "scenario.ini"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn reference_equilibrium_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("equilibrium", &scenario("reference.ini"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(tmp.path());
    assert!(num(&s, "residual_T") <= 1e-9);
    assert_eq!(s["within_bound"], "true");
    assert_eq!(s["contraction_note"], "no contraction observed (non-certifying)");
}

#[test]
fn bad_tau_exits_one_naming_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[domain]\nextent = 0, 1\nnodes = 5\n[population.1]\ntau = constant(-1)\n",
    );
    let out = run("equilibrium", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("population.1.tau"), "{err}");
}

#[test]
fn parse_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("[domain]\nextent = 0, 1\nnodes = 5\nspeed = 3\n", "unknown key 'speed'"),
        ("[domain]\nextent = 0, 1\nnodes = 5\n[population.1]\nactivation = clamp(1, 2, 1)\n", "population.1.activation"),
        ("[domain]\nextent = 0, 1\nnodes = five\n", "domain.nodes"),
    ] {
        let cfg = write_config(tmp.path(), text);
        for cmd in ["equilibrium", "verify", "simulate"] {
            let out = run(cmd, &cfg, &tmp.path().join("out"), &[]);
            assert_eq!(out.status.code(), Some(1), "{cmd}: {text}");
            assert!(String::from_utf8_lossy(&out.stderr).contains(needle));
        }
    }
    let out = fieldeq(&["equilibrium", "/nonexistent/scenario.ini"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn non_convergence_exits_two_with_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("equilibrium", &scenario("relu_divergent.ini"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let s = summary(tmp.path());
    assert_eq!(s["converged"], "false");
    assert_eq!(s["warnings"], "existence_not_guaranteed");
    assert!(tmp.path().join("equilibrium.csv").exists());
}

#[test]
fn simulate_from_equilibrium_stays_put() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("simulate", &scenario("reference.ini"), tmp.path(), &["--from-equilibrium", "--perturb", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let traj = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let d = column(&traj, "distance_to_reference");
    assert_eq!(d.len(), 101);
    assert!(d.iter().all(|&v| v <= 1e-6));
    assert!(num(&summary(tmp.path()), "max_distance_to_reference") <= 1e-6);
}

#[test]
fn decoupled_relaxation_from_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("simulate", &scenario("decoupled.ini"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let traj = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let t = column(&traj, "t");
    assert_eq!(*t.last().unwrap(), 20.0);
    for a in [0, 50, 100] {
        let z = column(&traj, &format!("z1_{a}"));
        assert!((z.last().unwrap() - 0.5).abs() <= 2e-3);
        // closed form 0.5 (1 − e^{−t}) up to the Euler error
        for (ti, zi) in t.iter().zip(&z) {
            assert!((zi - 0.5 * (1.0 - (-ti).exp())).abs() <= 1e-3);
        }
    }
    assert!(column(&traj, "distance_to_reference").iter().all(|v| v.is_nan()));
}

#[test]
fn divergent_simulation_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("simulate", &scenario("relu_divergent.ini"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    let s = summary(tmp.path());
    assert_eq!(s["status"], "non_finite_state");
    let traj = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let t = column(&traj, "t");
    assert!(t.len() > 2 && *t.last().unwrap() < 50.0);
}

#[test]
fn prehistory_file_and_perturbation() {
    let tmp = tempfile::tempdir().unwrap();
    let eq_dir = tmp.path().join("eq");
    assert_eq!(run("equilibrium", &scenario("pi.ini"), &eq_dir, &[]).status.code(), Some(0));
    let pre = eq_dir.join("equilibrium.csv");

    let a = tmp.path().join("a");
    let out = run("simulate", &scenario("pi.ini"), &a, &["--prehistory", pre.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    let eq = fs::read_to_string(&pre).unwrap();
    assert_eq!(column(&traj, "z1_7")[0], column(&eq, "z1")[7]);

    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for dir in [&b, &c] {
        let out = run("simulate", &scenario("pi.ini"), dir, &["--from-equilibrium", "--perturb", "0.05", "--seed", "4"]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(fs::read(b.join("trajectory.csv")).unwrap(), fs::read(c.join("trajectory.csv")).unwrap());
    let d0 = column(&fs::read_to_string(b.join("trajectory.csv")).unwrap(), "distance_to_reference")[0];
    assert!((d0 - 0.05).abs() < 1e-12);

    let out = run("simulate", &scenario("pi.ini"), &a, &["--prehistory", "/nonexistent.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_reference_and_consistency() {
    let tmp = tempfile::tempdir().unwrap();
    let sw = tmp.path().join("sweep");
    let out = run("sweep", &scenario("reference.ini"), &sw, &["--param", "control.k", "--values", "0,1,10,100"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(sw.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("true")));

    // a single-value sweep reproduces the equilibrium command
    let one = tmp.path().join("one");
    run("sweep", &scenario("reference.ini"), &one, &["--param", "control.k", "--values", "1"]);
    let eq = tmp.path().join("eq");
    run("equilibrium", &scenario("reference.ini"), &eq, &[]);
    let s = summary(&eq);
    let row: Vec<String> = fs::read_to_string(one.join("sweep.csv"))
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(String::from)
        .collect();
    assert_eq!(row[2], s["residual_T"]);
    assert_eq!(row[3], s["pair_norm_z"]);
    assert_eq!(row[4], s["iterations"]);
}

#[test]
fn sweep_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("sweep", &scenario("relu_divergent.ini"), tmp.path(), &["--param", "control.k", "--values", "0,1"]);
    assert_eq!(out.status.code(), Some(2));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains(",false,"));

    let out = run("sweep", &scenario("reference.ini"), tmp.path(), &["--param", "domain.nodes", "--values", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown sweep parameter"));
}

#[test]
fn verify_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fieldeq(&["verify", scenario("reference.ini").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("8/8 checks passed"), "{table}");

    let out = fieldeq(&["verify", scenario("decoupled.ini").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("identity path"));
}

#[test]
fn manifest_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert_eq!(run("equilibrium", &scenario("reference.ini"), dir, &["--seed", "11"]).status.code(), Some(0));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert!(manifest.contains("seed,11\n"));
    assert!(manifest.contains("command,equilibrium\n"));

    // the canonical copy reproduces the run on its own
    let c = tmp.path().join("c");
    run("equilibrium", &a.join("scenario.ini"), &c, &[]);
    assert_eq!(fs::read(a.join("equilibrium.csv")).unwrap(), fs::read(c.join("equilibrium.csv")).unwrap());
}

#[test]
fn help_and_usage() {
    assert_eq!(fieldeq(&["--help"]).status.code(), Some(0));
    assert_eq!(fieldeq(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fieldeq(&["sweep", "x.ini"]).status.code(), Some(1));
}
