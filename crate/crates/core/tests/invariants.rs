//! Corpus-wide sweeps of the structural invariants.

use sf_core::corpus::{builtins, CorpusSystem, Forms};
use sf_core::dynamics::{concretize, conservation_report, integrate, Method};
use sf_core::expr::{structurally_zero, ZeroConfig};
use sf_core::haantjes::build_chain_operators;
use sf_core::matrix::Matrix;
use sf_core::poisson::{involution_table, push_forward, verify_canonical};
use sf_core::stackel::{invert, is_homogeneous, momentum_degree};

fn cfg() -> ZeroConfig {
    ZeroConfig::default().with_seed(11)
}

fn corpus() -> Vec<(CorpusSystem, Forms)> {
    builtins()
        .into_iter()
        .map(|d| {
            let sys = d.compile().unwrap();
            let forms = sys.forms(&cfg()).unwrap();
            (sys, forms)
        })
        .collect()
}

#[test]
fn double_inverse_is_the_lift_matrix() {
    for (sys, _) in corpus() {
        let m = &sys.lift.entries;
        let back = invert(&invert(m, &cfg()).unwrap(), &cfg()).unwrap();
        assert!(back.sub(m).is_zero(&cfg()).unwrap(), "{}", sys.name());
    }
}

#[test]
fn momentum_independent_lifts_keep_the_degree_of_f() {
    let mut seen = 0;
    for (sys, forms) in corpus() {
        let chart = sys.chart();
        let independent = sys
            .lift
            .entries
            .entries()
            .all(|(_, e)| chart.momenta().iter().all(|p| !e.depends_on(p)));
        if !independent {
            continue;
        }
        seen += 1;
        let cap = sys
            .functions
            .iter()
            .filter_map(|f| momentum_degree(f, chart))
            .map(|(_, hi)| hi)
            .max()
            .unwrap();
        for (j, h) in forms.raw.hamiltonians.iter().enumerate() {
            let (_, hi) =
                momentum_degree(h, chart).unwrap_or_else(|| panic!("{} H{}", sys.name(), j + 1));
            assert!(hi <= cap, "{} H{}: degree {hi} > {cap}", sys.name(), j + 1);
        }
        if sys.name() == "riemannian-eisenhart-2d" {
            for h in &forms.printed.hamiltonians {
                assert_eq!(is_homogeneous(h, chart, 2), Some(true), "{h}");
            }
        }
    }
    assert!(seen >= 3);
}

#[test]
fn chain_operators_are_doubled_diagonals() {
    for (sys, forms) in corpus() {
        let flags = &sys.definition.flags;
        if !flags.theorem {
            continue;
        }
        let pivot = flags.pivot - 1;
        let ops = build_chain_operators(&forms.printed, pivot, &cfg()).unwrap();
        let n = sys.chart().dim();
        assert!(
            ops[pivot]
                .matrix
                .sub(&Matrix::identity(2 * n))
                .is_zero(&cfg())
                .unwrap(),
            "{}: pivot operator",
            sys.name()
        );
        for (j, k) in ops.iter().enumerate() {
            assert!(k.matrix.is_diagonal(), "{} K{}", sys.name(), j + 1);
            for i in 0..n {
                assert_eq!(
                    k.matrix[(i, i)],
                    k.matrix[(n + i, n + i)],
                    "{} K{} slot {i}",
                    sys.name(),
                    j + 1
                );
            }
        }
        for a in &ops {
            for b in &ops {
                let c = a.matrix.mul(&b.matrix).sub(&b.matrix.mul(&a.matrix));
                assert!(
                    c.entries().all(|(_, e)| structurally_zero(e)),
                    "{}",
                    sys.name()
                );
            }
        }
    }
}

#[test]
fn every_flow_conserves_every_integral() {
    for (sys, forms) in corpus() {
        let cs = concretize(forms.working(), &sys.concretization).unwrap();
        let ic = sys.initial_condition.as_ref().unwrap();
        for k in 0..cs.len() {
            let tr = integrate(&cs, k, ic, 10.0, 1e-3, Method::Rk4).unwrap();
            for d in conservation_report(&tr) {
                assert!(
                    d.relative <= 1e-6,
                    "{} flow of H{}: H{} drifts {:e}",
                    sys.name(),
                    k + 1,
                    d.index,
                    d.relative
                );
            }
        }
    }
}

#[test]
fn canonical_transforms_preserve_involution() {
    let mut seen = 0;
    for (sys, forms) in corpus() {
        for t in &sys.transforms {
            assert!(
                verify_canonical(&t.transform, &cfg()).unwrap().passed(),
                "{} {}",
                sys.name(),
                t.name
            );
            for form in [&forms.raw, &forms.printed, forms.working()] {
                assert!(involution_table(form, &cfg()).unwrap().all_zero());
                let pushed = push_forward(form, &t.transform).unwrap();
                assert!(
                    involution_table(&pushed, &cfg()).unwrap().all_zero(),
                    "{} {}",
                    sys.name(),
                    t.name
                );
            }
            seen += 1;
        }
    }
    assert_eq!(seen, 3);
}
