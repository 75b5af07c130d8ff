use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sf_bench::{chain_operator, load};
use sf_core::corpus::builtin;
use sf_core::dynamics::{concretize, integrate, Method};
use sf_core::expr::{is_zero, parse, ZeroConfig};
use sf_core::haantjes::{haantjes_torsion, nijenhuis_torsion};
use sf_core::poisson::involution_table;
use sf_core::suite::{run_suite, Check, SuiteConfig};

fn zero_test(c: &mut Criterion) {
    let cfg = ZeroConfig::default();
    let identity =
        parse("(V1(x) + V2(y))^3 - V1(x)^3 - 3*V1(x)^2*V2(y) - 3*V1(x)*V2(y)^2 - V2(y)^3").unwrap();
    c.bench_function("is_zero/cubic identity", |b| {
        b.iter(|| is_zero(black_box(&identity), &cfg).unwrap())
    });
    let rational = parse("1/(x - y) + 1/(y - x) + exp(x)*exp(-x) - 1").unwrap();
    c.bench_function("is_zero/rational identity", |b| {
        b.iter(|| is_zero(black_box(&rational), &cfg).unwrap())
    });
}

fn torsions(c: &mut Criterion) {
    let k = chain_operator("platonic-wave-4d");
    c.bench_function("nijenhuis/platonic K2", |b| {
        b.iter(|| nijenhuis_torsion(black_box(&k)))
    });
    c.bench_function("haantjes/platonic K2", |b| {
        b.iter(|| haantjes_torsion(black_box(&k)))
    });
}

fn involution(c: &mut Criterion) {
    let (_, forms) = load("stackel-riem-lift-3d");
    let cfg = ZeroConfig::default();
    c.bench_function("involution/stackel-riem-lift-3d", |b| {
        b.iter(|| involution_table(black_box(&forms.printed), &cfg).unwrap())
    });
}

fn flow(c: &mut Criterion) {
    let (sys, forms) = load("stackel-riem-lift-3d");
    let cs = concretize(forms.working(), &sys.concretization).unwrap();
    let ic = sys.initial_condition.clone().unwrap();
    c.bench_function("rk4/stackel-riem-lift-3d T=1", |b| {
        b.iter(|| integrate(&cs, 0, black_box(&ic), 1.0, 1e-3, Method::Rk4).unwrap())
    });
}

fn suite(c: &mut Criterion) {
    let def = builtin("riemannian-eisenhart-2d").unwrap();
    let cfg = SuiteConfig::default().with_checks([
        Check::Expected,
        Check::Residuals,
        Check::Involution,
        Check::Torsion,
    ]);
    let mut g = c.benchmark_group("suite");
    g.sample_size(10);
    g.bench_function("riemannian-eisenhart-2d", |b| {
        b.iter(|| run_suite(black_box(&def), &cfg))
    });
    g.finish();
}

criterion_group!(benches, zero_test, torsions, involution, flow, suite);
criterion_main!(benches);
