use std::path::Path;
use std::process::{Command, Output};

fn sf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sf"))
        .args(args)
        .env_remove("SF_WORKERS")
        .output()
        .expect("sf runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn list_names_every_builtin() {
    let o = sf(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in sf_core::corpus::list() {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn show_prints_the_generated_hamiltonians() {
    let o = sf(&["show", "riemannian-eisenhart-2d"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("generated Hamiltonians:"));
    assert!(text.contains("  H4 = "));
}

#[test]
fn unknown_targets_are_errors() {
    let o = sf(&["show", "no-such-system"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn passing_verification_exits_zero_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let o = sf(&[
        "verify",
        "cartesian-2d-seed",
        "--checks",
        "residuals,involution",
        "--seed",
        "3",
        "--json",
        path(&json),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("PASS cartesian-2d-seed"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
    assert_eq!(report["config"]["seed"], 3);
}

#[test]
fn failing_verification_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.toml");
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/corpus/riemannian-eisenhart-2d.toml"
    ))
    .unwrap();
    let sabotaged = text.replacen("\"-V1(x1)\"", "\"-2*V1(x1)\"", 1);
    assert_ne!(text, sabotaged);
    std::fs::write(&broken, sabotaged).unwrap();
    let o = sf(&["verify", path(&broken), "--checks", "expected,residuals"]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn unknown_checks_are_rejected() {
    let o = sf(&["verify", "cartesian-2d-seed", "--checks", "everything"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("involution"), "{}", stderr(&o));
}

#[test]
fn integrate_writes_a_csv_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let o = sf(&[
        "integrate",
        "stackel-riem-lift-3d",
        "--T",
        "1",
        "--dt",
        "0.01",
        "--csv",
        path(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("relative drift"));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with('t'), "{header}");
    assert_eq!(lines.count(), 101);
}

#[test]
fn integrate_checks_the_hamiltonian_index() {
    let o = sf(&[
        "integrate",
        "stackel-riem-lift-3d",
        "--hamiltonian",
        "9",
        "--T",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--hamiltonian"));
}

#[test]
fn reports_merge() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let merged = dir.path().join("m.json");
    for (target, out) in [("cartesian-2d-seed", &a), ("riemannian-eisenhart-2d", &b)] {
        let o = sf(&[
            "verify",
            target,
            "--checks",
            "residuals",
            "--json",
            path(out),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let o = sf(&[
        "report",
        path(&a),
        path(&b),
        "--merge",
        "--json",
        path(&merged),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&merged).unwrap()).unwrap();
    assert_eq!(report["systems"].as_array().unwrap().len(), 2);

    let o = sf(&["report", path(&a)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("cartesian-2d-seed"));
}

#[test]
fn worker_count_must_be_positive() {
    for bad in ["0", "many"] {
        let o = Command::new(env!("CARGO_BIN_EXE_sf"))
            .args(["list"])
            .env("SF_WORKERS", bad)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(2), "SF_WORKERS={bad}");
        assert!(stderr(&o).contains("SF_WORKERS"));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_sf"))
        .args(["list"])
        .env("SF_WORKERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
}
