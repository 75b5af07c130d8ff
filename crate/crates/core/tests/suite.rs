use sf_core::corpus::builtin;
use sf_core::report::{without_timing, Verdict};
use sf_core::suite::{run_corpus, run_suite, Check, SuiteConfig};

#[test]
fn riemannian_eisenhart_lift_passes_everything() {
    let r = run_suite(
        &builtin("riemannian-eisenhart-2d").unwrap(),
        &SuiteConfig::default(),
    );
    assert!(
        r.passed,
        "{:#?}",
        r.checks.iter().filter(|c| !c.passed()).collect::<Vec<_>>()
    );
    for check in [
        "expected",
        "residuals",
        "involution",
        "operators",
        "torsion",
        "compat",
        "algebra",
        "chain",
        "cofactor",
        "integration",
    ] {
        assert!(r.find(check).next().is_some(), "{check} missing");
        assert!(
            r.find(check).all(|e| e.verdict != Verdict::Skipped),
            "{check} skipped"
        );
    }
}

#[test]
fn transcendental_system_declines_the_symplectic_integrator() {
    let cfg =
        SuiteConfig::default().with_checks([Check::Involution, Check::Torsion, Check::Integration]);
    let r = run_suite(&builtin("transcendental-3d").unwrap(), &cfg);
    assert!(r.passed);
    assert!(r.find("torsion").count() == 3);
    let flow = r.find("integration").next().unwrap();
    let detail = flow.detail.as_deref().unwrap();
    assert!(detail.starts_with("rk4"), "{detail}");
    assert!(detail.contains("not separable"), "{detail}");
}

#[test]
fn broken_definition_stops_only_its_own_branch() {
    let mut def = builtin("stackel-riem-lift-3d").unwrap();
    def.matrix.rows[0][1] = "0".into();
    let r = run_suite(&def, &SuiteConfig::default());
    assert_eq!(r.checks.len(), 2, "{:#?}", r.checks);
    assert_eq!(r.checks[0].verdict, Verdict::Proven);
    assert_eq!(r.checks[1].check, "generation");
    assert_eq!(r.checks[1].verdict, Verdict::Failed);
    assert!(r.checks[1]
        .detail
        .as_deref()
        .unwrap()
        .contains("determinant vanishes"));

    let mut def = builtin("stackel-riem-lift-3d").unwrap();
    def.matrix.rows[2][2] = "0".into();
    let r = run_suite(&def, &SuiteConfig::default());
    assert_eq!(r.checks.len(), 1);
    assert_eq!(r.checks[0].verdict, Verdict::Failed);
}

#[test]
fn reports_are_seed_deterministic() {
    let defs: Vec<_> = [
        "cartesian-2d-seed",
        "stackel-riem-lift-3d",
        "lorentzian-wave-4d",
    ]
    .iter()
    .map(|n| builtin(n).unwrap())
    .collect();
    let cfg = SuiteConfig::default().with_seed(7);
    let a = run_corpus(&defs, &cfg).to_json();
    let b = run_corpus(&defs, &cfg).to_json();
    assert_eq!(without_timing(&a).unwrap(), without_timing(&b).unwrap());
    let c = run_corpus(&defs, &SuiteConfig::default().with_seed(8)).to_json();
    assert_ne!(without_timing(&a).unwrap(), without_timing(&c).unwrap());
}
