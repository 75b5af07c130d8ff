//! Shared fixtures for the benchmarks.

use sf_core::corpus::{builtin, CorpusSystem, Forms};
use sf_core::expr::ZeroConfig;
use sf_core::haantjes::{build_chain_operators, TensorField11};

pub fn load(name: &str) -> (CorpusSystem, Forms) {
    let sys = builtin(name)
        .expect("builtin system")
        .compile()
        .expect("compiles");
    let forms = sys.forms(&ZeroConfig::default()).expect("forms");
    (sys, forms)
}

/// The second chain operator of a flagged system.
pub fn chain_operator(name: &str) -> TensorField11 {
    let (sys, forms) = load(name);
    let pivot = sys.definition.flags.pivot - 1;
    build_chain_operators(&forms.printed, pivot, &ZeroConfig::default())
        .expect("operators")
        .swap_remove(1)
}
