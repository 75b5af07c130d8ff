//! The verification pipeline for one system definition.
//!
//! Stages run in a fixed order and each records one or more report
//! entries. A failed check never stops the pipeline; a hard error
//! (unparseable definition, singular matrix) ends only the stages that
//! depend on its output.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSystem, Forms, SystemDefinition};
use crate::dynamics::{concretize, conservation_report, integrate};
use crate::expr::{derive_seed, is_zero, simplify, Expr, ZeroConfig};
use crate::haantjes::{
    algebra_checks, build_chain_operators, chain_check, chain_potential_matches,
    cofactor_cross_check, compatibility_check, haantjes_torsion, random_coefficients,
    CofactorVariant, TensorField11,
};
use crate::poisson::{involution_table, push_forward, verify_canonical};
use crate::report::{CheckEntry, ConfigEcho, Report, SystemReport, Verdict};
use crate::stackel::{momentum_degree, separation_residuals, HamiltonianSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Expected,
    Residuals,
    Involution,
    Basis,
    Operators,
    Torsion,
    Compat,
    Algebra,
    Chain,
    Cofactor,
    Transform,
    Integration,
}

impl Check {
    pub const ALL: [Check; 12] = [
        Check::Expected,
        Check::Residuals,
        Check::Involution,
        Check::Basis,
        Check::Operators,
        Check::Torsion,
        Check::Compat,
        Check::Algebra,
        Check::Chain,
        Check::Cofactor,
        Check::Transform,
        Check::Integration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Expected => "expected",
            Check::Residuals => "residuals",
            Check::Involution => "involution",
            Check::Basis => "basis",
            Check::Operators => "operators",
            Check::Torsion => "torsion",
            Check::Compat => "compat",
            Check::Algebra => "algebra",
            Check::Chain => "chain",
            Check::Cofactor => "cofactor",
            Check::Transform => "transform",
            Check::Integration => "integration",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;
    fn from_str(s: &str) -> Result<Check, String> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Check::ALL.iter().map(|c| c.name()).collect();
                format!("unknown check `{s}`; available: {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub zero: ZeroConfig,
    pub checks: BTreeSet<Check>,
    /// Random `(f, g)` pairs for the combination closure check.
    pub algebra_samples: usize,
    /// Largest relative drift of any `H_j` accepted along a flow.
    pub drift_tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            zero: ZeroConfig::default(),
            checks: Check::ALL.into_iter().collect(),
            algebra_samples: 5,
            drift_tol: 1e-6,
        }
    }
}

impl SuiteConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.zero.seed = seed;
        self
    }

    pub fn with_checks(mut self, checks: impl IntoIterator<Item = Check>) -> Self {
        self.checks = checks.into_iter().collect();
        self
    }

    fn wants(&self, c: Check) -> bool {
        self.checks.contains(&c)
    }

    /// Zero-test settings for sub-job `index` of `check`.
    fn zero_for(&self, check: Check, index: u64) -> ZeroConfig {
        let stage = derive_seed(self.zero.seed, check as u64 + 1);
        self.zero.with_seed(derive_seed(stage, index))
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho::new(
            &self.zero,
            self.checks.iter().map(|c| c.name().to_string()).collect(),
        )
    }
}

fn timed(f: impl FnOnce() -> CheckEntry) -> CheckEntry {
    let start = Instant::now();
    let mut e = f();
    e.timing_ms = start.elapsed().as_secs_f64() * 1e3;
    e
}

fn timed_many(f: impl FnOnce() -> Vec<CheckEntry>) -> Vec<CheckEntry> {
    let start = Instant::now();
    let mut es = f();
    let ms = start.elapsed().as_secs_f64() * 1e3 / es.len().max(1) as f64;
    for e in &mut es {
        e.timing_ms = ms;
    }
    es
}

/// Run every selected check on one definition.
pub fn run_suite(def: &SystemDefinition, cfg: &SuiteConfig) -> SystemReport {
    let start = Instant::now();
    let mut checks = Vec::new();

    let mut compiled = None;
    checks.push(timed(|| match def.compile() {
        Ok(sys) => {
            compiled = Some(sys);
            CheckEntry::new("shape", "matrix", Verdict::Proven)
                .with_detail(format!("{} shape", def.matrix.mode))
        }
        Err(e) => CheckEntry::new("shape", "matrix", Verdict::Failed).with_detail(e.to_string()),
    }));
    let Some(sys) = compiled else {
        return SystemReport::new(&def.name, checks, start.elapsed().as_secs_f64() * 1e3);
    };

    let mut forms = None;
    checks.push(timed(|| match sys.forms(&cfg.zero) {
        Ok(f) => {
            let detail = format!("{} Hamiltonians", f.printed.len());
            forms = Some(f);
            CheckEntry::new("generation", "raw", Verdict::Proven).with_detail(detail)
        }
        Err(e) => CheckEntry::new("generation", "raw", Verdict::Failed).with_detail(e.to_string()),
    }));
    let Some(forms) = forms else {
        return SystemReport::new(&def.name, checks, start.elapsed().as_secs_f64() * 1e3);
    };

    if cfg.wants(Check::Expected) {
        checks.push(timed(|| expected_check(&sys, &forms, cfg)));
    }
    if cfg.wants(Check::Residuals) {
        checks.push(timed(|| residual_check(&sys, &forms, cfg)));
    }
    if cfg.wants(Check::Involution) {
        checks.extend(involution_checks(&forms, cfg));
    }
    if cfg.wants(Check::Basis) {
        checks.extend(basis_checks(&sys, &forms));
    }
    checks.extend(theorem_checks(&sys, &forms, cfg));
    if cfg.wants(Check::Transform) {
        checks.extend(transform_checks(&sys, &forms, cfg));
    }
    if cfg.wants(Check::Integration) {
        checks.push(timed(|| integration_check(&sys, &forms, cfg)));
    }
    SystemReport::new(&def.name, checks, start.elapsed().as_secs_f64() * 1e3)
}

/// Run the suite on several definitions concurrently; report order follows input order.
pub fn run_corpus(defs: &[SystemDefinition], cfg: &SuiteConfig) -> Report {
    let start = Instant::now();
    let systems: Vec<SystemReport> = defs.par_iter().map(|d| run_suite(d, cfg)).collect();
    Report::new(cfg.echo(), systems, start.elapsed().as_secs_f64() * 1e3)
}

fn expected_check(sys: &CorpusSystem, forms: &Forms, cfg: &SuiteConfig) -> CheckEntry {
    if sys.expected_hamiltonians.is_empty() {
        return CheckEntry::skipped(
            "expected",
            "printed",
            "no printed Hamiltonians for this system",
        );
    }
    let results: Vec<_> = forms
        .printed
        .hamiltonians
        .par_iter()
        .zip(&sys.expected_hamiltonians)
        .enumerate()
        .map(|(j, (got, want))| {
            (
                format!("H{}", j + 1),
                is_zero(&(got - want), &cfg.zero_for(Check::Expected, j as u64)),
            )
        })
        .collect();
    CheckEntry::from_zero(
        "expected",
        "printed",
        results.iter().map(|(l, r)| (l.clone(), r)),
    )
}

fn residual_check(sys: &CorpusSystem, forms: &Forms, cfg: &SuiteConfig) -> CheckEntry {
    let residuals = separation_residuals(&sys.lift, &sys.functions, &forms.raw);
    let results: Vec<_> = residuals
        .par_iter()
        .enumerate()
        .map(|(a, r)| {
            (
                format!("row {}", a + 1),
                is_zero(r, &cfg.zero_for(Check::Residuals, a as u64)),
            )
        })
        .collect();
    CheckEntry::from_zero(
        "residuals",
        "raw",
        results.iter().map(|(l, r)| (l.clone(), r)),
    )
}

fn all_forms(forms: &Forms) -> Vec<(String, &HamiltonianSystem)> {
    let mut out = vec![
        ("raw".to_string(), &forms.raw),
        ("printed".to_string(), &forms.printed),
    ];
    if let Some(s) = &forms.specialized {
        out.push(("specialized".to_string(), s));
    }
    out.extend(forms.bases.iter().map(|(n, s)| (n.clone(), s)));
    out
}

fn involution_checks(forms: &Forms, cfg: &SuiteConfig) -> Vec<CheckEntry> {
    all_forms(forms)
        .into_iter()
        .enumerate()
        .map(|(k, (name, s))| {
            timed(
                || match involution_table(s, &cfg.zero_for(Check::Involution, k as u64)) {
                    Ok(t) => {
                        let results: Vec<_> = t
                            .entries
                            .iter()
                            .map(|((i, j), v)| {
                                (format!("{{H{},H{}}}", i + 1, j + 1), Ok(v.clone()))
                            })
                            .collect();
                        CheckEntry::from_zero(
                            "involution",
                            name.clone(),
                            results.iter().map(|(l, r)| (l.clone(), r)),
                        )
                    }
                    Err(e) => CheckEntry::new("involution", name.clone(), Verdict::Inconclusive)
                        .with_detail(e.to_string()),
                },
            )
        })
        .collect()
}

/// The first member of each basis with required diagonal terms must be at
/// most quadratic in the momenta and contain every listed `p²`.
fn basis_checks(sys: &CorpusSystem, forms: &Forms) -> Vec<CheckEntry> {
    let chart = sys.chart();
    sys.bases
        .iter()
        .zip(&forms.bases)
        .filter(|((_, _, diagonal), _)| !diagonal.is_empty())
        .map(|((name, _, diagonal), (_, s))| {
            timed(|| {
                let h = &s.hamiltonians[0];
                let degree = momentum_degree(h, chart);
                if !matches!(degree, Some((_, hi)) if hi <= 2) {
                    return CheckEntry::new("basis", name.clone(), Verdict::Failed).with_detail(
                        format!(
                        "first member is not at most quadratic in the momenta (degrees {degree:?})"
                    ),
                    );
                }
                let mut missing = Vec::new();
                for p in diagonal {
                    let coefficient = h.diff(p).diff(p);
                    if crate::expr::structurally_zero(&coefficient) {
                        missing.push(format!("{p}^2"));
                    }
                }
                if missing.is_empty() {
                    CheckEntry::new("basis", name.clone(), Verdict::Proven).with_detail(format!(
                        "quadratic with diagonal terms {}",
                        diagonal.join(", ")
                    ))
                } else {
                    CheckEntry::new("basis", name.clone(), Verdict::Failed).with_witnesses(missing)
                }
            })
        })
        .collect()
}

fn theorem_checks(sys: &CorpusSystem, forms: &Forms, cfg: &SuiteConfig) -> Vec<CheckEntry> {
    let flags = &sys.definition.flags;
    let selected: Vec<Check> = [
        Check::Operators,
        Check::Torsion,
        Check::Compat,
        Check::Algebra,
        Check::Chain,
        Check::Cofactor,
    ]
    .into_iter()
    .filter(|c| cfg.wants(*c))
    .collect();
    if selected.is_empty() {
        return Vec::new();
    }
    if !flags.theorem {
        return selected
            .iter()
            .map(|c| CheckEntry::skipped(c.name(), "operators", "theorem hypotheses not flagged"))
            .collect();
    }
    let pivot = flags.pivot - 1;
    let printed = &forms.printed;
    let start = Instant::now();
    let ops = match build_chain_operators(printed, pivot, &cfg.zero_for(Check::Operators, 0)) {
        Ok(ops) => ops,
        Err(e) => {
            return selected
                .iter()
                .map(|c| {
                    CheckEntry::new(c.name(), "operators", Verdict::Failed)
                        .with_detail(format!("construction failed: {e}"))
                })
                .collect()
        }
    };
    let build_ms = start.elapsed().as_secs_f64() * 1e3;
    let label = |j: usize| format!("K{}", j + 1);
    let mut out = Vec::new();

    if cfg.wants(Check::Operators) {
        out.push(timed(|| operator_check(sys, &ops, cfg)));
        if let Some(e) = out.last_mut() {
            e.timing_ms += build_ms;
        }
    }
    if cfg.wants(Check::Torsion) {
        out.extend(timed_many(|| {
            ops.par_iter()
                .enumerate()
                .map(|(j, k)| {
                    match haantjes_torsion(k).verdicts(&cfg.zero_for(Check::Torsion, j as u64)) {
                        Ok(vs) => {
                            let results: Vec<_> = vs
                                .into_iter()
                                .map(|((a, b, c), v)| {
                                    (format!("component ({},{},{})", a + 1, b + 1, c + 1), Ok(v))
                                })
                                .collect();
                            CheckEntry::from_zero(
                                "torsion",
                                label(j),
                                results.iter().map(|(l, r)| (l.clone(), r)),
                            )
                        }
                        Err(e) => CheckEntry::new("torsion", label(j), Verdict::Inconclusive)
                            .with_detail(e.to_string()),
                    }
                })
                .collect()
        }));
    }
    if cfg.wants(Check::Compat) {
        out.extend(timed_many(|| {
            ops.par_iter()
                .enumerate()
                .map(|(j, k)| {
                    match compatibility_check(k, &cfg.zero_for(Check::Compat, j as u64)) {
                        Ok(bad) => {
                            CheckEntry::new("compat", label(j), Verdict::from_bool(bad.is_empty()))
                                .with_witnesses(
                                    bad.iter()
                                        .map(|(a, b)| format!("entry ({},{})", a + 1, b + 1))
                                        .collect(),
                                )
                        }
                        Err(e) => CheckEntry::new("compat", label(j), Verdict::Inconclusive)
                            .with_detail(e.to_string()),
                    }
                })
                .collect()
        }));
    }
    if cfg.wants(Check::Algebra) {
        out.push(timed(|| {
            let samples = random_coefficients(
                sys.chart(),
                cfg.algebra_samples,
                cfg.zero_for(Check::Algebra, 0).seed,
            );
            match algebra_checks(&ops, &samples, &cfg.zero_for(Check::Algebra, 1)) {
                Ok(r) => CheckEntry::new("algebra", "operators", Verdict::from_bool(r.passed()))
                    .with_detail(format!(
                        "{} checks over {} operators, {} coefficient samples",
                        r.entries.len(),
                        ops.len(),
                        samples.len()
                    ))
                    .with_witnesses(
                        r.failures()
                            .map(|f| {
                                let (a, b) = f.operators;
                                format!(
                                    "{} K{a}, K{b}: {}",
                                    f.check,
                                    f.detail.clone().unwrap_or_default()
                                )
                            })
                            .collect(),
                    ),
                Err(e) => CheckEntry::new("algebra", "operators", Verdict::Inconclusive)
                    .with_detail(e.to_string()),
            }
        }));
    }
    if cfg.wants(Check::Chain) {
        let h = &printed.hamiltonians[pivot];
        out.extend(timed_many(|| {
            ops.par_iter()
                .enumerate()
                .map(|(j, k)| {
                    let z = cfg.zero_for(Check::Chain, j as u64);
                    let closed = chain_check(k, h, &z);
                    let matches = chain_potential_matches(k, h, &printed.hamiltonians[j], &z);
                    match (closed, matches) {
                        (Ok(c), Ok(m)) => {
                            let mut w: Vec<String> = c
                                .failures
                                .iter()
                                .map(|(a, b)| format!("d(K^T dH) component ({},{})", a + 1, b + 1))
                                .collect();
                            if !m {
                                w.push(format!("K^T dH{} differs from dH{}", pivot + 1, j + 1));
                            }
                            CheckEntry::new("chain", label(j), Verdict::from_bool(w.is_empty()))
                                .with_detail(format!("against H{}", pivot + 1))
                                .with_witnesses(w)
                        }
                        (Err(e), _) | (_, Err(e)) => {
                            CheckEntry::new("chain", label(j), Verdict::Inconclusive)
                                .with_detail(e.to_string())
                        }
                    }
                })
                .collect()
        }));
    }
    if cfg.wants(Check::Cofactor) {
        out.push(timed(|| cofactor_check(sys, forms, cfg)));
    }
    out
}

fn operator_check(sys: &CorpusSystem, ops: &[TensorField11], cfg: &SuiteConfig) -> CheckEntry {
    if sys.expected_operators.is_empty() {
        return CheckEntry::new("operators", "chain", Verdict::Proven).with_detail(format!(
            "{} diagonal operators built; none printed",
            ops.len()
        ));
    }
    let jobs: Vec<(String, Expr)> = sys
        .expected_operators
        .iter()
        .flat_map(|(j, m)| {
            let got = &ops[j - 1].matrix;
            m.entries().map(move |((a, b), want)| {
                (
                    format!("K{j} entry ({},{})", a + 1, b + 1),
                    &got[(a, b)] - want,
                )
            })
        })
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .enumerate()
        .map(|(n, (l, e))| {
            (
                l.clone(),
                is_zero(e, &cfg.zero_for(Check::Operators, n as u64 + 1)),
            )
        })
        .collect();
    CheckEntry::from_zero(
        "operators",
        "printed",
        results.iter().map(|(l, r)| (l.clone(), r)),
    )
}

/// The eigenvalues rebuilt from cofactors of the lift matrix must match the
/// derivative quotients; the variant that gates the momentum term by the
/// slot index is reported alongside.
fn cofactor_check(sys: &CorpusSystem, forms: &Forms, cfg: &SuiteConfig) -> CheckEntry {
    let z = cfg.zero_for(Check::Cofactor, 0);
    let run = |v| cofactor_cross_check(&sys.lift, &sys.functions, &forms.raw, 0, v, &z);
    match (run(CofactorVariant::Summed), run(CofactorVariant::Literal)) {
        (Ok(summed), Ok(literal)) => {
            let fmt = |xs: &[(usize, usize)]| {
                xs.iter()
                    .map(|(j, r)| format!("(j={j}, r={r})"))
                    .collect::<Vec<_>>()
            };
            let detail = if literal.is_empty() {
                "index-gated variant agrees".to_string()
            } else {
                format!(
                    "index-gated variant mismatches at {}",
                    fmt(&literal).join(", ")
                )
            };
            CheckEntry::new("cofactor", "raw", Verdict::from_bool(summed.is_empty()))
                .with_detail(detail)
                .with_witnesses(fmt(&summed))
        }
        (Err(e), _) | (_, Err(e)) => {
            CheckEntry::new("cofactor", "raw", Verdict::Inconclusive).with_detail(e.to_string())
        }
    }
}

fn transform_checks(sys: &CorpusSystem, forms: &Forms, cfg: &SuiteConfig) -> Vec<CheckEntry> {
    let mut out = Vec::new();
    for (k, t) in sys.transforms.iter().enumerate() {
        out.push(timed(|| {
            match verify_canonical(&t.transform, &cfg.zero_for(Check::Transform, k as u64)) {
                Ok(v) => {
                    let verdict = if v.passed() {
                        Verdict::all(v.verdicts.iter().map(Verdict::from_zero))
                    } else {
                        Verdict::Failed
                    };
                    CheckEntry::new("transform", t.name.clone(), verdict)
                        .with_detail(format!("{} brackets", v.checked))
                        .with_witnesses(
                            v.failures
                                .iter()
                                .map(|f| format!("{{{}, {}}}: {}", f.left, f.right, f.residual))
                                .collect(),
                        )
                }
                Err(e) => CheckEntry::new("transform", t.name.clone(), Verdict::Inconclusive)
                    .with_detail(e.to_string()),
            }
        }));
        for (n, (form, h, want)) in t.push.iter().enumerate() {
            let target = format!("{}:{form}.H{h}", t.name);
            out.push(timed(|| {
                let Some(src) = forms.get(form) else {
                    return CheckEntry::new("push-forward", target.clone(), Verdict::Failed)
                        .with_detail(format!("no form `{form}`"));
                };
                match push_forward(src, &t.transform) {
                    Ok(pushed) => {
                        let Some(got) = pushed.hamiltonians.get(h - 1) else {
                            return CheckEntry::new(
                                "push-forward",
                                target.clone(),
                                Verdict::Failed,
                            )
                            .with_detail(format!("form `{form}` has no H{h}"));
                        };
                        let r = is_zero(
                            &(got - want),
                            &cfg.zero_for(Check::Transform, 1000 + (k * 100 + n) as u64),
                        );
                        CheckEntry::from_zero(
                            "push-forward",
                            target.clone(),
                            [(format!("H{h}"), &r)],
                        )
                        .with_detail(format!("pushed forward: {}", simplify(got)))
                    }
                    Err(e) => CheckEntry::new("push-forward", target.clone(), Verdict::Failed)
                        .with_detail(e.to_string()),
                }
            }));
        }
    }
    out
}

fn integration_check(sys: &CorpusSystem, forms: &Forms, cfg: &SuiteConfig) -> CheckEntry {
    let (Some(spec), Some(ic)) = (&sys.definition.dynamics, &sys.initial_condition) else {
        return CheckEntry::skipped("integration", "flow", "no dynamics section");
    };
    let target = format!("H{} flow", spec.hamiltonian);
    let cs = match concretize(forms.working(), &sys.concretization) {
        Ok(cs) => cs,
        Err(e) => {
            return CheckEntry::new("integration", target, Verdict::Failed)
                .with_detail(e.to_string())
        }
    };
    match integrate(
        &cs,
        spec.hamiltonian - 1,
        ic,
        spec.duration,
        spec.dt,
        spec.method,
    ) {
        Ok(tr) => {
            let drift = conservation_report(&tr);
            let mut entry = CheckEntry::new("integration", target, Verdict::Proven);
            let mut worst: f64 = 0.0;
            for d in &drift {
                entry
                    .metrics
                    .insert(format!("H{}.absolute", d.index), d.absolute);
                entry
                    .metrics
                    .insert(format!("H{}.relative", d.index), d.relative);
                worst = worst.max(d.relative);
                if d.relative > cfg.drift_tol {
                    entry
                        .witnesses
                        .push(format!("H{} relative drift {:e}", d.index, d.relative));
                }
            }
            entry.verdict = Verdict::from_bool(entry.witnesses.is_empty());
            let mut detail = format!(
                "{}, dt = {}, T = {}, max relative drift {worst:e}",
                tr.meta.method, tr.meta.dt, tr.meta.duration
            );
            if let Some(note) = &tr.meta.note {
                detail.push_str("; ");
                detail.push_str(note);
            }
            entry.with_detail(detail)
        }
        Err(e) => {
            CheckEntry::new("integration", target, Verdict::Failed).with_detail(e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin;

    #[test]
    fn check_names_round_trip() {
        for c in Check::ALL {
            assert_eq!(c.name().parse::<Check>().unwrap(), c);
        }
        assert!("bogus".parse::<Check>().is_err());
    }

    #[test]
    fn sabotaged_entry_is_reported_and_later_checks_run() {
        let mut def = builtin("riemannian-eisenhart-2d").unwrap();
        def.matrix.rows[0][2] = "-2*V1(x1)".into();
        let cfg = SuiteConfig::default().with_checks([
            Check::Expected,
            Check::Residuals,
            Check::Involution,
        ]);
        let r = run_suite(&def, &cfg);
        let expected = r.find("expected").next().unwrap();
        assert_eq!(expected.verdict, Verdict::Failed);
        assert!(!expected.witnesses.is_empty());
        assert!(r.find("residuals").all(|e| e.passed()));
        assert!(r.find("involution").all(|e| e.passed()));
        assert!(!r.passed);
    }

    #[test]
    fn unflagged_systems_skip_operator_checks() {
        let def = builtin("cartesian-2d-seed").unwrap();
        let r = run_suite(
            &def,
            &SuiteConfig::default().with_checks([Check::Torsion, Check::Chain]),
        );
        assert!(r.find("torsion").all(|e| e.verdict == Verdict::Skipped));
        assert!(r.passed);
    }
}
