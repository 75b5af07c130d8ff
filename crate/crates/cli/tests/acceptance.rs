//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Every criterion runs even when an earlier one fails; the test fails at
//! the end if any line reads FAIL.

use std::process::Command;
use std::time::{Duration, Instant};

use sf_core::chart::Chart;
use sf_core::corpus::{builtin, builtins, CorpusSystem, Forms};
use sf_core::dynamics::{concretize, conservation_report, integrate, Method};
use sf_core::expr::{is_zero, parse, Expr, ZeroConfig};
use sf_core::haantjes::numeric::{compare, TorsionKind};
use sf_core::haantjes::{
    build_chain_operators, haantjes_torsion, nijenhuis_torsion, TensorField11,
};
use sf_core::matrix::Matrix;
use sf_core::poisson::{involution_table, push_forward, verify_canonical};
use sf_core::report::{without_timing, Report};
use sf_core::stackel::{invert, HamiltonianSystem};

const TRIALS: usize = 100;
const TOL: f64 = 1e-9;
const DRIFT_TOL: f64 = 1e-6;
const SABOTAGE_MIN_DRIFT: f64 = 1e-2;
const ORACLE_TOL: f64 = 1e-4;
const ORACLE_POINTS: usize = 25;
const REPORT_SEED: u64 = 7;

fn zero_cfg() -> ZeroConfig {
    ZeroConfig {
        trials: TRIALS,
        tol: TOL,
        ..ZeroConfig::default()
    }
}

fn matrix(rows: &[&[&str]]) -> Matrix {
    Matrix::from_rows(
        rows.iter()
            .map(|r| r.iter().map(|s| parse(s).unwrap()).collect())
            .collect(),
    )
}

fn same(a: &Expr, b: &Expr) -> bool {
    matches!(is_zero(&(a - b), &zero_cfg()), Ok(v) if v.is_zero())
}

fn load(name: &str) -> (CorpusSystem, Forms) {
    let sys = builtin(name).unwrap().compile().unwrap();
    let forms = sys.forms(&zero_cfg()).unwrap();
    (sys, forms)
}

struct Outcome {
    ok: bool,
    detail: String,
}

impl Outcome {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Outcome {
            ok,
            detail: detail.into(),
        }
    }
}

struct Ledger {
    failed: Vec<usize>,
}

impl Ledger {
    fn run(&mut self, n: usize, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> f64 {
        let start = Instant::now();
        let out = f();
        self.record(n, title, budget, start.elapsed(), out)
    }

    fn record(
        &mut self,
        n: usize,
        title: &str,
        budget: Duration,
        took: Duration,
        out: Outcome,
    ) -> f64 {
        let in_budget = took <= budget;
        let ok = out.ok && in_budget;
        if !ok {
            self.failed.push(n);
        }
        let budget_note = if in_budget {
            String::new()
        } else {
            format!(", over the {:.0} s budget", budget.as_secs_f64())
        };
        println!(
            "criterion {n:>2} {}: {title} ({:.2} s{budget_note}); {}",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            out.detail
        );
        took.as_secs_f64()
    }
}

fn matrix_reproduction() -> Outcome {
    let cases = [
        (
            "Stackel 1",
            matrix(&[
                &["0", "1/2", "-V1(x1)"],
                &["1", "-1/2", "-V2(x2)"],
                &["0", "0", "1"],
            ]),
            matrix(&[
                &["1", "1", "V1(x1) + V2(x2)"],
                &["2", "0", "2*V1(x1)"],
                &["0", "0", "1"],
            ]),
        ),
        (
            "Stackel 2",
            matrix(&[
                &["1", "-1/2", "-V1(x1)"],
                &["0", "1/2", "-V2(x2)"],
                &["0", "0", "1"],
            ]),
            matrix(&[
                &["1", "1", "V1(x1) + V2(x2)"],
                &["0", "2", "2*V2(x2)"],
                &["0", "0", "1"],
            ]),
        ),
    ];
    let mut bad = Vec::new();
    for (name, s, printed) in &cases {
        let inv = invert(s, &zero_cfg()).unwrap();
        for ((i, j), e) in printed.entries() {
            if !same(&inv[(i, j)], e) {
                bad.push(format!("{name} ({},{})", i + 1, j + 1));
            }
        }
    }
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            "18 entries match".into()
        } else {
            format!("mismatches: {}", bad.join(", "))
        },
    )
}

fn hamiltonian_reproduction() -> Outcome {
    let (_, forms) = load("riemannian-eisenhart-2d");
    let printed = [
        "(p1^2 + p2^2 + (V1(x1) + V2(x2))*pu^2)/2",
        "p1^2 + V1(x1)*pu^2",
        "p2^2 + V2(x2)*pu^2",
        "pu^2/2",
    ];
    let h = &forms.printed.hamiltonians;
    let mut bad: Vec<String> = printed
        .iter()
        .enumerate()
        .filter(|(j, s)| !same(&h[*j], &parse(s).unwrap()))
        .map(|(j, _)| format!("H{}", j + 1))
        .collect();
    let identity = &h[2] - &(&(&Expr::int(2) * &h[0]) - &h[1]);
    if !same(&identity, &Expr::zero()) {
        bad.push("H3 - (2 H1 - H2)".into());
    }
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            "H1..H4 and H3 = 2 H1 - H2".into()
        } else {
            format!("mismatches: {}", bad.join(", "))
        },
    )
}

fn operator_reproduction() -> Outcome {
    let (_, forms) = load("algebra-A2-haantjes");
    let ops = build_chain_operators(&forms.printed, 0, &zero_cfg()).unwrap();
    let s = "(V1(x1) + V2(x2))";
    let k1 = [
        "2".to_string(),
        "0".into(),
        format!("2*V1(x1)/{s}"),
        "2".into(),
        "0".into(),
        format!("2*V1(x1)/{s}"),
    ];
    let k2 = [
        "0".to_string(),
        "2".into(),
        format!("2*V2(x2)/{s}"),
        "0".into(),
        "2".into(),
        format!("2*V2(x2)/{s}"),
    ];
    let k3 = [
        "0".to_string(),
        "0".into(),
        format!("1/{s}"),
        "0".into(),
        "0".into(),
        format!("1/{s}"),
    ];
    let mut bad = Vec::new();
    for (name, op, diag) in [
        ("K1", &ops[1], &k1),
        ("K2", &ops[2], &k2),
        ("K3", &ops[3], &k3),
    ] {
        let want = Matrix::diagonal(&diag.iter().map(|d| parse(d).unwrap()).collect::<Vec<_>>());
        for ((i, j), e) in want.entries() {
            if !same(&op.matrix[(i, j)], e) {
                bad.push(format!("{name} ({},{})", i + 1, j + 1));
            }
        }
    }
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            "108 entries match".into()
        } else {
            format!("mismatches: {}", bad.join(", "))
        },
    )
}

fn involution() -> Outcome {
    let mut tables = 0;
    let mut bad = Vec::new();
    for def in builtins() {
        let sys = def.compile().unwrap();
        let forms = sys.forms(&zero_cfg()).unwrap();
        let mut all = vec![("raw", &forms.raw), ("printed", &forms.printed)];
        if let Some(s) = &forms.specialized {
            all.push(("specialized", s));
        }
        all.extend(forms.bases.iter().map(|(n, s)| (n.as_str(), s)));
        for (form, s) in all {
            tables += 1;
            assert!(s.len() <= 5);
            match involution_table(s, &zero_cfg()) {
                Ok(t) if t.all_zero() => {}
                _ => bad.push(format!("{} {form}", def.name)),
            }
        }
    }
    let n = builtins().len();
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{tables} tables over {n} systems")
        } else {
            format!("failing: {}", bad.join(", "))
        },
    )
}

fn theorem_instances(report: &Report) -> (Outcome, Duration) {
    let mut ms = 0.0;
    let mut seen = 0;
    let mut bad = Vec::new();
    for s in &report.systems {
        let flagged = builtin(&s.name).unwrap().flags.theorem;
        if !flagged {
            continue;
        }
        seen += 1;
        for c in s
            .checks
            .iter()
            .filter(|c| ["torsion", "compat", "algebra", "chain"].contains(&c.check.as_str()))
        {
            ms += c.timing_ms;
            if !c.passed() {
                bad.push(format!("{} {} {}", s.name, c.check, c.target));
            }
        }
    }
    let out = Outcome::new(
        bad.is_empty() && seen > 0,
        if bad.is_empty() {
            format!(
                "torsion, compatibility, algebra and chain entries pass on {seen} flagged systems"
            )
        } else {
            format!("failing: {}", bad.join(", "))
        },
    );
    (out, Duration::from_secs_f64(ms / 1e3))
}

fn separation_residuals() -> Outcome {
    let mut rows = 0;
    let mut bad = Vec::new();
    for def in builtins() {
        let sys = def.compile().unwrap();
        let raw = sys.raw(&zero_cfg()).unwrap();
        for (a, r) in sf_core::stackel::separation_residuals(&sys.lift, &sys.functions, &raw)
            .iter()
            .enumerate()
        {
            rows += 1;
            if !same(r, &Expr::zero()) {
                bad.push(format!("{} row {}", def.name, a + 1));
            }
        }
    }
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{rows} rows vanish")
        } else {
            format!("failing: {}", bad.join(", "))
        },
    )
}

fn gauge_transforms() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, t) in [
        ("stackel-riem-lift-3d", 0),
        ("lorentzian-wave-4d", 0),
        ("cylindrical-case-1", 0),
    ] {
        let (sys, _) = load(name);
        let v = verify_canonical(&sys.transforms[t].transform, &zero_cfg()).unwrap();
        ok &= v.passed();
        if !v.passed() {
            notes.push(format!("{name} not canonical"));
        }
    }
    let printed = [
        (
            "stackel-riem-lift-3d",
            "tilde",
            "(P1^2 + P2^2 + (1 - V1(Q1)^2 - V2(Q2)^2)*P3^2)/2",
        ),
        (
            "lorentzian-wave-4d",
            "printed",
            "(P1^2 + P2^2 + (1 - W1(Q1)^2 - W2(Q2)^2)*P3^2 + 2*P3*P4)/2",
        ),
    ];
    for (name, form, want) in printed {
        let (sys, forms) = load(name);
        let pushed = push_forward(forms.get(form).unwrap(), &sys.transforms[0].transform).unwrap();
        if !same(&pushed.hamiltonians[0], &parse(want).unwrap()) {
            ok = false;
            notes.push(format!(
                "{name} push-forward differs from the printed nonmagnetic form"
            ));
        }
    }
    Outcome::new(
        ok,
        if notes.is_empty() {
            "3 transforms canonical, 2 nonmagnetic forms match".into()
        } else {
            notes.join("; ")
        },
    )
}

fn conservation() -> Outcome {
    let mut worst: f64 = 0.0;
    for name in ["stackel-riem-lift-3d", "platonic-wave-4d"] {
        let (sys, forms) = load(name);
        let cs = concretize(forms.working(), &sys.concretization).unwrap();
        let ic = sys.initial_condition.clone().unwrap();
        let tr = integrate(&cs, 0, &ic, 10.0, 1e-3, Method::Rk4).unwrap();
        worst = conservation_report(&tr)
            .iter()
            .map(|d| d.relative)
            .fold(worst, f64::max);
    }
    let (sys, forms) = load("stackel-riem-lift-3d");
    let mut hs = forms.working().hamiltonians.clone();
    hs[1] = &hs[1] + &Expr::var("x1");
    let sabotaged = HamiltonianSystem::manual(sys.chart().clone(), hs);
    let cs = concretize(&sabotaged, &sys.concretization).unwrap();
    let tr = integrate(
        &cs,
        0,
        sys.initial_condition.as_ref().unwrap(),
        10.0,
        1e-3,
        Method::Rk4,
    )
    .unwrap();
    let control = conservation_report(&tr)[1].relative;
    Outcome::new(
        worst <= DRIFT_TOL && control > SABOTAGE_MIN_DRIFT,
        format!("max relative drift {worst:.2e} (limit {DRIFT_TOL:e}); sabotaged H2 drifts {control:.2e} (needs > {SABOTAGE_MIN_DRIFT:e})"),
    )
}

fn torsion_oracle() -> Outcome {
    let mut ops: Vec<(String, TensorField11)> = Vec::new();
    for (name, j) in [
        ("riemannian-eisenhart-2d", 1),
        ("algebra-A2-haantjes", 1),
        ("stackel-riem-lift-3d", 1),
        ("platonic-wave-4d", 1),
        ("cylindrical-case-1", 1),
    ] {
        let (sys, forms) = load(name);
        let k = build_chain_operators(&forms.printed, sys.definition.flags.pivot - 1, &zero_cfg())
            .unwrap();
        ops.push((format!("{name} K{}", j + 1), k[j].clone()));
    }
    let designed = Chart::new(&["x1"], &["x2"]).unwrap();
    ops.push((
        "designed 2D".into(),
        TensorField11::new(designed, matrix(&[&["0", "x1"], &["1", "0"]])),
    ));
    let mut worst: f64 = 0.0;
    let mut rejected = 0;
    let mut bad = Vec::new();
    for (n, (name, k)) in ops.iter().enumerate() {
        for (kind, t) in [
            (TorsionKind::Nijenhuis, nijenhuis_torsion(k)),
            (TorsionKind::Haantjes, haantjes_torsion(k)),
        ] {
            match compare(k, &t, kind, ORACLE_POINTS, 100 + n as u64) {
                Ok(r) => {
                    worst = worst.max(r.max_relative_error);
                    rejected += r.rejected;
                    if r.rejected > r.points {
                        bad.push(format!(
                            "{name} {kind:?}: {} of {} samples ill-conditioned",
                            r.rejected,
                            r.rejected + r.points
                        ));
                    }
                    if r.max_relative_error >= ORACLE_TOL {
                        bad.push(format!("{name} {kind:?} {:.2e}", r.max_relative_error));
                    }
                }
                Err(e) => bad.push(format!("{name} {kind:?}: {e}")),
            }
        }
    }
    let designed_nonzero = nijenhuis_torsion(&ops[5].1)
        .nonzero_components(&zero_cfg())
        .map(|v| !v.is_empty())
        .unwrap_or(false);
    if !designed_nonzero {
        bad.push("designed example has vanishing Nijenhuis torsion".into());
    }
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "{} operators, {ORACLE_POINTS} points each, max relative error {worst:.2e} (limit {ORACLE_TOL:e}), {rejected} ill-conditioned samples redrawn",
                ops.len()
            )
        } else {
            format!("failing: {}", bad.join(", "))
        },
    )
}

fn verify_with_cli(path: &std::path::Path) -> (Report, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sf"))
        .args([
            "verify",
            "all",
            "--seed",
            &REPORT_SEED.to_string(),
            "--json",
        ])
        .arg(path)
        .output()
        .expect("sf runs");
    assert!(
        matches!(out.status.code(), Some(0 | 1)),
        "sf verify crashed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(path).unwrap();
    (Report::from_json(&text).unwrap(), text)
}

#[test]
fn acceptance() {
    let mut ledger = Ledger { failed: Vec::new() };
    let dir = tempfile::tempdir().unwrap();

    let start = Instant::now();
    let (report, first) = verify_with_cli(&dir.path().join("a.json"));
    let (_, second) = verify_with_cli(&dir.path().join("b.json"));
    let determinism_time = start.elapsed();

    ledger.run(
        1,
        "matrix reproduction",
        Duration::from_secs(1),
        matrix_reproduction,
    );
    ledger.run(
        2,
        "Hamiltonian reproduction",
        Duration::from_secs(1),
        hamiltonian_reproduction,
    );
    ledger.run(
        3,
        "operator reproduction",
        Duration::from_secs(5),
        operator_reproduction,
    );
    ledger.run(4, "involution", Duration::from_secs(180), involution);
    let (outcome, took) = theorem_instances(&report);
    ledger.record(
        5,
        "theorem instances",
        Duration::from_secs(300),
        took,
        outcome,
    );
    ledger.run(
        6,
        "separation residuals",
        Duration::from_secs(30),
        separation_residuals,
    );
    ledger.run(
        7,
        "gauge transforms",
        Duration::from_secs(10),
        gauge_transforms,
    );
    ledger.run(8, "conservation", Duration::from_secs(30), conservation);
    ledger.run(9, "torsion oracle", Duration::from_secs(60), torsion_oracle);

    let a = serde_json::to_string(&without_timing(&first).unwrap()).unwrap();
    let b = serde_json::to_string(&without_timing(&second).unwrap()).unwrap();
    let identical = a == b;
    let detail = format!(
        "{} systems, {} entries, reports {} modulo timing",
        report.systems.len(),
        report.entries().count(),
        if identical { "identical" } else { "differ" }
    );
    ledger.record(
        10,
        "determinism",
        Duration::from_secs(1200),
        determinism_time,
        Outcome::new(identical, detail),
    );

    assert!(
        ledger.failed.is_empty(),
        "failing criteria: {:?}",
        ledger.failed
    );
}
