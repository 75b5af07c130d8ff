//! Poisson brackets, involution tables and canonical transformations in
//! Darboux coordinates.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::chart::Chart;
use crate::expr::{
    derive_seed, is_zero, simplify, Expr, Substitution, ZeroConfig, ZeroError, ZeroVerdict,
};
use crate::stackel::{HamiltonianSystem, Provenance};

/// `{F, G} = Σ_i ∂F/∂q^i ∂G/∂p_i − ∂F/∂p_i ∂G/∂q^i`.
pub fn poisson_bracket(f: &Expr, g: &Expr, chart: &Chart) -> Expr {
    let mut terms = Vec::with_capacity(2 * chart.dim());
    for i in 0..chart.dim() {
        let (q, p) = (chart.coord(i), chart.momentum(i));
        let fq = f.diff(q);
        let gp = g.diff(p);
        if !fq.is_literal_zero() && !gp.is_literal_zero() {
            terms.push(fq * gp);
        }
        let fp = f.diff(p);
        let gq = g.diff(q);
        if !fp.is_literal_zero() && !gq.is_literal_zero() {
            terms.push(-(fp * gq));
        }
    }
    Expr::sum(terms)
}

/// Verdicts for every pair `i < j`, keyed by 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct InvolutionTable {
    pub size: usize,
    pub entries: BTreeMap<(usize, usize), ZeroVerdict>,
}

impl InvolutionTable {
    pub fn get(&self, i: usize, j: usize) -> Option<&ZeroVerdict> {
        if i == j {
            return None;
        }
        self.entries.get(&(i.min(j), i.max(j)))
    }

    pub fn all_zero(&self) -> bool {
        self.entries.values().all(ZeroVerdict::is_zero)
    }
}

/// Bracket every unordered pair of the family. Pairs run in parallel, each
/// with its own seed derived from `(i, j)`.
pub fn involution_table(
    sys: &HamiltonianSystem,
    cfg: &ZeroConfig,
) -> Result<InvolutionTable, ZeroError> {
    let m = sys.len();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect();
    let verdicts: Result<Vec<_>, ZeroError> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let b = poisson_bracket(&sys.hamiltonians[i], &sys.hamiltonians[j], &sys.chart);
            let seed = derive_seed(cfg.seed, (i * m + j) as u64);
            is_zero(&b, &cfg.with_seed(seed)).map(|v| ((i, j), v))
        })
        .collect();
    Ok(InvolutionTable {
        size: m,
        entries: verdicts?.into_iter().collect(),
    })
}

/// A vector field with one component per phase-space variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub chart: Chart,
    pub components: Vec<Expr>,
}

impl VectorField {
    pub fn new(chart: Chart, components: Vec<Expr>) -> Self {
        assert_eq!(components.len(), chart.phase_dim());
        VectorField { chart, components }
    }

    /// The coordinate field `∂/∂x^a`.
    pub fn coordinate(chart: &Chart, a: usize) -> Self {
        let components = (0..chart.phase_dim())
            .map(|b| if a == b { Expr::one() } else { Expr::zero() })
            .collect();
        VectorField {
            chart: chart.clone(),
            components,
        }
    }
}

/// `q̇^i = ∂H/∂p_i`, `ṗ_i = −∂H/∂q^i`.
pub fn hamiltonian_vector_field(h: &Expr, chart: &Chart) -> VectorField {
    let n = chart.dim();
    let mut components = Vec::with_capacity(2 * n);
    for i in 0..n {
        components.push(h.diff(chart.momentum(i)));
    }
    for i in 0..n {
        components.push(-h.diff(chart.coord(i)));
    }
    VectorField {
        chart: chart.clone(),
        components,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("source and target charts differ in dimension ({0} vs {1})")]
    Dimension(usize, usize),
    #[error("forward map has {found} components, expected {expected}")]
    Components { expected: usize, found: usize },
    #[error("forward map is not triangular; supply the inverse explicitly")]
    NotTriangular,
    #[error(transparent)]
    Zero(#[from] ZeroError),
}

/// A change of variables `(q, p) ↦ (Q, P)`, written as target variables in
/// terms of source variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTransform {
    pub source: Chart,
    pub target: Chart,
    /// Component `a` is the target phase variable `a` as a function of the source.
    pub forward: Vec<Expr>,
    /// Source phase variables in terms of target ones, when known.
    pub inverse: Option<Vec<Expr>>,
}

impl CanonicalTransform {
    pub fn new(source: Chart, target: Chart, forward: Vec<Expr>) -> Result<Self, TransformError> {
        if source.dim() != target.dim() {
            return Err(TransformError::Dimension(source.dim(), target.dim()));
        }
        if forward.len() != source.phase_dim() {
            return Err(TransformError::Components {
                expected: source.phase_dim(),
                found: forward.len(),
            });
        }
        Ok(CanonicalTransform {
            source,
            target,
            forward,
            inverse: None,
        })
    }

    pub fn identity(chart: &Chart) -> Self {
        CanonicalTransform {
            source: chart.clone(),
            target: chart.clone(),
            forward: chart.vars(),
            inverse: Some(chart.vars()),
        }
    }

    /// The inverse map, given explicitly or derived for the gauge shape
    /// `new_a = old_a + g_a(other old variables)`, solved by iterated
    /// back-substitution along the dependency order.
    pub fn inverse_map(&self) -> Result<Vec<Expr>, TransformError> {
        if let Some(inv) = &self.inverse {
            return Ok(inv.clone());
        }
        let src = self.source.phase_vars();
        let tgt = self.target.vars();
        let dim = src.len();
        // g_a = forward_a − old_a must not involve old_a itself.
        let mut shift = Vec::with_capacity(dim);
        for (a, f) in self.forward.iter().enumerate() {
            let g = simplify(&(f - &Expr::var_sym(src[a].clone())));
            let dg = g.diff(&src[a]);
            if !is_zero(&dg, &ZeroConfig::default())?.is_zero() {
                return Err(TransformError::NotTriangular);
            }
            shift.push(g);
        }
        // Solve old_a = new_a − g_a(old) in dependency order.
        let mut solved: Vec<Option<Expr>> = vec![None; dim];
        for _ in 0..dim {
            let mut progress = false;
            for a in 0..dim {
                if solved[a].is_some() {
                    continue;
                }
                let deps: Vec<usize> = (0..dim).filter(|&b| shift[a].depends_on(&src[b])).collect();
                if deps.iter().all(|&b| solved[b].is_some()) {
                    let mut s = Substitution::new();
                    for &b in &deps {
                        s.insert_var(&src[b], solved[b].clone().unwrap());
                    }
                    let g = s.apply(&shift[a]).expect("variable substitution");
                    solved[a] = Some(&tgt[a] - &g);
                    progress = true;
                }
            }
            if !progress {
                break;
            }
        }
        solved
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or(TransformError::NotTriangular)
    }
}

/// A bracket among the transformed variables that fails its canonical value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketFailure {
    pub left: String,
    pub right: String,
    pub residual: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalVerdict {
    pub checked: usize,
    pub failures: Vec<BracketFailure>,
    pub verdicts: Vec<ZeroVerdict>,
}

impl CanonicalVerdict {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Check `{Q_i,Q_j} = {P_i,P_j} = 0` and `{Q_i,P_j} = δ_ij` in source variables.
pub fn verify_canonical(
    t: &CanonicalTransform,
    cfg: &ZeroConfig,
) -> Result<CanonicalVerdict, TransformError> {
    let n = t.source.dim();
    let dim = 2 * n;
    let mut jobs = Vec::new();
    for a in 0..dim {
        for b in a + 1..dim {
            let expected = if a < n && b == a + n {
                Expr::one()
            } else {
                Expr::zero()
            };
            jobs.push((a, b, expected));
        }
    }
    let results: Result<Vec<_>, ZeroError> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, (a, b, expected))| {
            let br = poisson_bracket(&t.forward[*a], &t.forward[*b], &t.source);
            let residual = br - expected;
            is_zero(&residual, &cfg.with_seed(derive_seed(cfg.seed, k as u64)))
                .map(|v| (*a, *b, residual, v))
        })
        .collect();
    let mut failures = Vec::new();
    let mut verdicts = Vec::new();
    for (a, b, residual, v) in results? {
        if !v.is_zero() {
            failures.push(BracketFailure {
                left: t.target.phase_var(a).to_string(),
                right: t.target.phase_var(b).to_string(),
                residual: residual.to_string(),
            });
        }
        verdicts.push(v);
    }
    Ok(CanonicalVerdict {
        checked: jobs.len(),
        failures,
        verdicts,
    })
}

/// Express every Hamiltonian in the target variables.
pub fn push_forward(
    sys: &HamiltonianSystem,
    t: &CanonicalTransform,
) -> Result<HamiltonianSystem, TransformError> {
    let inv = t.inverse_map()?;
    let mut s = Substitution::new();
    for (v, e) in t.source.phase_vars().iter().zip(inv) {
        s.insert_var(v, e);
    }
    let hamiltonians = sys
        .hamiltonians
        .iter()
        .map(|h| s.apply(h).expect("variable substitution"))
        .collect();
    Ok(HamiltonianSystem {
        chart: t.target.clone(),
        hamiltonians,
        provenance: Provenance::Derived {
            recipe: t.forward.iter().map(|e| e.to_string()).collect(),
            from: Box::new(sys.provenance.clone()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn qp() -> Chart {
        Chart::new(&["q"], &["p"]).unwrap()
    }

    fn zero(e: &Expr) -> bool {
        is_zero(e, &ZeroConfig::default()).unwrap().is_zero()
    }

    #[test]
    fn elementary_brackets() {
        let c = qp();
        assert_eq!(
            poisson_bracket(&Expr::var("q"), &Expr::var("p"), &c),
            Expr::one()
        );
        let b = poisson_bracket(&Expr::var("p"), &parse("q*p").unwrap(), &c);
        assert!(zero(&(b + Expr::var("p"))));
    }

    #[test]
    fn vector_field_of_potential_motion() {
        let c = qp();
        let x = hamiltonian_vector_field(&parse("p^2/2 + V(q)").unwrap(), &c);
        assert_eq!(x.components[0], Expr::var("p"));
        assert!(zero(&(&x.components[1] + &parse("V'(q)").unwrap())));
    }

    #[test]
    fn lorentzian_third_flow() {
        let c = Chart::new(&["u", "t"], &["pu", "pt"]).unwrap();
        let x = hamiltonian_vector_field(&parse("pu^2/2 + pt*pu").unwrap(), &c);
        assert!(zero(&(&x.components[0] - &parse("pu + pt").unwrap())));
        assert!(zero(&(&x.components[1] - &parse("pu").unwrap())));
    }

    #[test]
    fn involution_table_detects_non_commuting_pair() {
        let c = Chart::new(&["x1", "x2"], &["p1", "p2"]).unwrap();
        let sys = HamiltonianSystem::manual(
            c.clone(),
            vec![parse("p1^2/2 + V(x1)").unwrap(), parse("p2").unwrap()],
        );
        assert!(involution_table(&sys, &ZeroConfig::default())
            .unwrap()
            .all_zero());
        let bad =
            HamiltonianSystem::manual(c, vec![parse("p1^2/2").unwrap(), parse("x1").unwrap()]);
        let t = involution_table(&bad, &ZeroConfig::default()).unwrap();
        assert!(!t.get(1, 0).unwrap().is_zero());
    }

    #[test]
    fn canonicity() {
        let c = qp();
        assert!(
            verify_canonical(&CanonicalTransform::identity(&c), &ZeroConfig::default())
                .unwrap()
                .passed()
        );
        let scaled = CanonicalTransform::new(
            c.clone(),
            c,
            vec![parse("2*q").unwrap(), parse("p").unwrap()],
        )
        .unwrap();
        let v = verify_canonical(&scaled, &ZeroConfig::default()).unwrap();
        assert_eq!(v.failures.len(), 1);
        assert_eq!(v.failures[0].residual, "1");
    }

    #[test]
    fn triangular_inverse() {
        let src = Chart::new(&["x1", "u"], &["p1", "pu"]).unwrap();
        let tgt = Chart::new(&["Q1", "U"], &["P1", "PU"]).unwrap();
        let forward = ["x1", "u - V1[-1](x1)", "p1 + V1(x1)*pu", "pu"]
            .iter()
            .map(|s| parse(s).unwrap())
            .collect();
        let t = CanonicalTransform::new(src, tgt, forward).unwrap();
        assert!(verify_canonical(&t, &ZeroConfig::default())
            .unwrap()
            .passed());
        let inv = t.inverse_map().unwrap();
        assert!(zero(&(&inv[2] - &parse("P1 - V1(Q1)*PU").unwrap())));
        assert!(zero(&(&inv[1] - &parse("U + V1[-1](Q1)").unwrap())));
    }
}
