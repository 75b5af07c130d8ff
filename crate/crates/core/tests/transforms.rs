use sf_core::corpus::{builtin, CorpusSystem, Forms};
use sf_core::expr::{is_zero, parse, Expr, ZeroConfig};
use sf_core::poisson::{push_forward, verify_canonical};

fn cfg() -> ZeroConfig {
    ZeroConfig::default().with_seed(3)
}

fn load(name: &str) -> (CorpusSystem, Forms) {
    let sys = builtin(name).unwrap().compile().unwrap();
    let forms = sys.forms(&cfg()).unwrap();
    (sys, forms)
}

fn pushed_h1(sys: &CorpusSystem, forms: &Forms, form: &str) -> Expr {
    let t = &sys.transforms[0].transform;
    assert!(verify_canonical(t, &cfg()).unwrap().passed());
    push_forward(forms.get(form).unwrap(), t)
        .unwrap()
        .hamiltonians[0]
        .clone()
}

fn same(a: &Expr, b: &str) -> bool {
    is_zero(&(a - &parse(b).unwrap()), &cfg())
        .unwrap()
        .is_zero()
}

#[test]
fn riemannian_gauge_removes_the_magnetic_terms() {
    let (sys, forms) = load("stackel-riem-lift-3d");
    let h = pushed_h1(&sys, &forms, "tilde");
    assert!(same(&h, "(P1^2 + P2^2 + (1 - V1(Q1)^2 - V2(Q2)^2)*P3^2)/2"));
}

#[test]
fn lorentzian_gauge_leaves_the_deficit_on_the_time_momentum() {
    let (sys, forms) = load("lorentzian-wave-4d");
    let h = pushed_h1(&sys, &forms, "printed");
    assert!(same(
        &h,
        "(P1^2 + P2^2 + P3^2 + 2*P3*P4 - (W1(Q1)^2 + W2(Q2)^2)*P4^2)/2"
    ));
    assert!(!same(
        &h,
        "(P1^2 + P2^2 + (1 - W1(Q1)^2 - W2(Q2)^2)*P3^2 + 2*P3*P4)/2"
    ));
}

#[test]
fn platonic_wave_is_conformal_to_a_bargmann_wave() {
    let (_, forms) = load("platonic-wave-4d");
    let h = &forms.printed.hamiltonians[0];
    let conformal = "(V1(x1) + V2(x2)) * ((p1^2 + p2^2)/(2*(V1(x1) + V2(x2))) + pu^2/2 + pt*pu \
                     + W1(x1)/(V1(x1) + V2(x2))*p1*pt + W2(x2)/(V1(x1) + V2(x2))*p2*pt)";
    assert!(same(h, conformal));
}

#[test]
fn cylindrical_gauge_is_canonical() {
    let (sys, forms) = load("cylindrical-case-1");
    let t = &sys.transforms[0].transform;
    let v = verify_canonical(t, &cfg()).unwrap();
    assert!(v.passed(), "{:?}", v.failures);
    assert_eq!(v.checked, 28);
    let pushed = push_forward(forms.working(), t).unwrap();
    assert_eq!(pushed.chart.dim(), 4);
}
