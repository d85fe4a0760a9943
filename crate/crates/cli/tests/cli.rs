use std::path::Path;
use std::process::{Command, Output};

fn gfdm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfdm")).args(args).current_dir(dir).output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = gfdm(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Largest value in the last column of a CSV with a header.
fn max_last_column(path: &Path) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max)
}

#[test]
fn staged_pipeline_on_the_ellipse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["sample", "--manifold", "ellipse", "--n", "800", "--seed", "3", "--out", "x.csv", "--params", "p.csv"], d);
    let geo = ["--points", "x.csv", "--params", "p.csv", "--manifold", "ellipse", "--frames", "analytic", "--degree", "3"];
    let mut args = vec!["assemble"];
    args.extend(geo);
    args.extend(["--out", "raw.tri"]);
    ok(&args, d);
    let mut args = vec!["stabilize"];
    args.extend(geo);
    args.extend(["--operator", "raw.tri", "--attempt-flagged", "--out", "lp.tri", "--report", "c.csv"]);
    ok(&args, d);
    assert!(d.join("c.csv").exists());
    ok(&["solve", "--points", "x.csv", "--params", "p.csv", "--manifold", "ellipse", "--operator", "lp.tri", "--problem", "closed", "--out", "u.csv"], d);
    let ie = max_last_column(&d.join("u.csv"));
    assert!(ie < 1e-3, "IE {ie}");
}

#[test]
fn dirichlet_solve_on_the_semi_torus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["sample", "--manifold", "semitorus", "--n", "1200", "--out", "x.csv", "--params", "p.csv"], d);
    let geo = ["--points", "x.csv", "--params", "p.csv", "--manifold", "semitorus", "--frames", "analytic", "--k", "51"];
    let mut args = vec!["assemble"];
    args.extend(geo);
    args.extend(["--out", "raw.tri"]);
    ok(&args, d);
    let mut args = vec!["stabilize"];
    args.extend(geo);
    args.extend(["--operator", "raw.tri", "--out", "lp.tri"]);
    ok(&args, d);
    ok(&["solve", "--points", "x.csv", "--params", "p.csv", "--manifold", "semitorus", "--operator", "lp.tri", "--detector", "raw.tri", "--problem", "dirichlet", "--out", "u.csv"], d);
    let ie = max_last_column(&d.join("u.csv"));
    assert!(ie.is_finite() && ie < 0.5, "IE {ie}");
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.toml"), "manifold = \"ellipse\"\nn = [400, 800, 1600]\ndegrees = [2]\n").unwrap();
    ok(&["sweep", "--config", "c.toml", "--out", "run", "--set", "trials=2"], d);
    let records = d.join("run/records.csv");
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 1 + 3 * 2);
    let text = ok(&["report", records.to_str().unwrap(), "--out", "summary.csv"], d);
    assert!(text.contains("slope"), "{text}");
    assert!(d.join("summary.csv").exists());
}

#[test]
fn failed_cells_give_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.toml"), "n = [10, 400]\nk = 21\n").unwrap();
    let out = gfdm(&["sweep", "--config", "c.toml", "--out", "run"], d);
    assert!(!out.status.success());
    assert!(d.join("run/records.csv").exists());
}

#[test]
fn bad_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(!gfdm(&["sample", "--manifold", "klein", "--n", "10", "--out", "x.csv"], d).status.success());
    std::fs::write(d.join("c.toml"), "nonsense = 3\n").unwrap();
    assert!(!gfdm(&["sweep", "--config", "c.toml"], d).status.success());
    assert!(!gfdm(&["solve", "--points", "missing.csv", "--operator", "m.tri", "--problem", "closed", "--out", "u.csv"], d).status.success());
}
