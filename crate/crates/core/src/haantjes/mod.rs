//! (1,1)-tensor fields on phase space: Nijenhuis and Haantjes torsions,
//! chain operators of a separable family, and the checks that make them an
//! Abelian Haantjes algebra compatible with the symplectic form.
//!
//! A tensor `K` is stored as the matrix `K^i_j` acting on the coordinate
//! frame, `K(∂_j) = Σ_i K^i_j ∂_i`, in the phase-space ordering of its chart.

pub mod numeric;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::chart::Chart;
use crate::expr::{
    derive_seed, is_zero, is_zero_many, simplify, Expr, ZeroConfig, ZeroError, ZeroVerdict,
};
use crate::matrix::Matrix;
use crate::poisson::VectorField;
use crate::stackel::{HamiltonianSystem, LiftMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField11 {
    pub chart: Chart,
    pub matrix: Matrix,
}

impl TensorField11 {
    pub fn new(chart: Chart, matrix: Matrix) -> Self {
        assert_eq!(
            matrix.size(),
            chart.phase_dim(),
            "operator size must match phase dimension"
        );
        TensorField11 { chart, matrix }
    }

    pub fn identity(chart: &Chart) -> Self {
        TensorField11::new(chart.clone(), Matrix::identity(chart.phase_dim()))
    }

    pub fn dim(&self) -> usize {
        self.matrix.size()
    }

    pub fn compose(&self, other: &TensorField11) -> TensorField11 {
        TensorField11::new(self.chart.clone(), self.matrix.mul(&other.matrix))
    }

    /// `f·self + g·other`.
    pub fn combine(&self, f: &Expr, other: &TensorField11, g: &Expr) -> TensorField11 {
        TensorField11::new(
            self.chart.clone(),
            self.matrix.scale(f).add(&other.matrix.scale(g)),
        )
    }

    pub fn apply(&self, x: &VectorField) -> VectorField {
        VectorField::new(self.chart.clone(), self.matrix.apply(&x.components))
    }
}

/// A vector-valued 2-form `T^k_ij`, antisymmetric in `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorsionField {
    pub chart: Chart,
    dim: usize,
    components: Vec<Expr>,
}

impl TorsionField {
    fn from_upper(
        chart: &Chart,
        dim: usize,
        mut f: impl FnMut(usize, usize, usize) -> Expr,
    ) -> Self {
        let mut components = vec![Expr::zero(); dim * dim * dim];
        for k in 0..dim {
            for i in 0..dim {
                for j in i + 1..dim {
                    let c = f(k, i, j);
                    components[(k * dim + j) * dim + i] = -&c;
                    components[(k * dim + i) * dim + j] = c;
                }
            }
        }
        TorsionField {
            chart: chart.clone(),
            dim,
            components,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Component `T^k_ij`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> &Expr {
        &self.components[(k * self.dim + i) * self.dim + j]
    }

    /// Independent components `(k, i, j)` with `i < j`.
    pub fn upper(&self) -> impl Iterator<Item = ((usize, usize, usize), &Expr)> + '_ {
        let d = self.dim;
        (0..d).flat_map(move |k| {
            (0..d).flat_map(move |i| (i + 1..d).map(move |j| ((k, i, j), self.get(k, i, j))))
        })
    }

    /// Zero verdicts for the independent components, skipping literal zeros.
    pub fn verdicts(
        &self,
        cfg: &ZeroConfig,
    ) -> Result<Vec<((usize, usize, usize), ZeroVerdict)>, ZeroError> {
        let work: Vec<_> = self.upper().filter(|(_, e)| !e.is_literal_zero()).collect();
        let batch: Vec<Expr> = work.iter().map(|(_, e)| (*e).clone()).collect();
        let verdicts = is_zero_many(&batch, cfg)?;
        Ok(work.into_iter().map(|(ijk, _)| ijk).zip(verdicts).collect())
    }

    /// Indices of components that are not zero.
    pub fn nonzero_components(
        &self,
        cfg: &ZeroConfig,
    ) -> Result<Vec<(usize, usize, usize)>, ZeroError> {
        Ok(self
            .verdicts(cfg)?
            .into_iter()
            .filter(|(_, v)| !v.is_zero())
            .map(|(ijk, _)| ijk)
            .collect())
    }

    pub fn vanishes(&self, cfg: &ZeroConfig) -> Result<bool, ZeroError> {
        Ok(self.nonzero_components(cfg)?.is_empty())
    }
}

/// `[X, Y]^k = Σ_i (X^i ∂_i Y^k − Y^i ∂_i X^k)`.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> VectorField {
    let vars = x.chart.phase_vars();
    let components = (0..vars.len())
        .map(|k| {
            let mut terms = Vec::new();
            for (i, v) in vars.iter().enumerate() {
                if !x.components[i].is_literal_zero() {
                    let d = y.components[k].diff(v);
                    if !d.is_literal_zero() {
                        terms.push(&x.components[i] * &d);
                    }
                }
                if !y.components[i].is_literal_zero() {
                    let d = x.components[k].diff(v);
                    if !d.is_literal_zero() {
                        terms.push(-(&y.components[i] * &d));
                    }
                }
            }
            Expr::sum(terms)
        })
        .collect();
    VectorField::new(x.chart.clone(), components)
}

/// `∂_a K^k_j` for every `a`, indexed `[a][k * dim + j]`.
fn jacobian(k: &TensorField11) -> Vec<Vec<Expr>> {
    let vars = k.chart.phase_vars();
    vars.iter()
        .map(|v| k.matrix.entries().map(|(_, e)| e.diff(v)).collect())
        .collect()
}

fn prod(a: &Expr, b: &Expr) -> Option<Expr> {
    (!a.is_literal_zero() && !b.is_literal_zero()).then(|| a * b)
}

/// Nijenhuis torsion on coordinate frame pairs:
///
/// `τ^k_ij = Σ_a (K^a_i ∂_a K^k_j − K^a_j ∂_a K^k_i) − Σ_a K^k_a (∂_i K^a_j − ∂_j K^a_i)`.
pub fn nijenhuis_torsion(k: &TensorField11) -> TorsionField {
    let d = k.dim();
    let m = &k.matrix;
    let dk = jacobian(k);
    let dkm = |a: usize, r: usize, c: usize| &dk[a][r * d + c];
    TorsionField::from_upper(&k.chart, d, |kk, i, j| {
        let mut terms = Vec::new();
        for a in 0..d {
            terms.extend(prod(&m[(a, i)], dkm(a, kk, j)));
            terms.extend(prod(&m[(a, j)], dkm(a, kk, i)).map(|t| -t));
            let curl = Expr::sum([dkm(i, a, j).clone(), -dkm(j, a, i)]);
            terms.extend(prod(&m[(kk, a)], &curl).map(|t| -t));
        }
        Expr::sum(terms)
    })
}

/// Haantjes torsion assembled from the Nijenhuis components by tensoriality:
///
/// `ℋ^k_ij = (K²)^k_l τ^l_ij + K^a_i K^b_j τ^k_ab − K^k_l (K^b_j τ^l_ib + K^a_i τ^l_aj)`.
pub fn haantjes_torsion(k: &TensorField11) -> TorsionField {
    let tau = nijenhuis_torsion(k);
    haantjes_from_nijenhuis(k, &tau)
}

pub fn haantjes_from_nijenhuis(k: &TensorField11, tau: &TorsionField) -> TorsionField {
    let d = k.dim();
    let m = &k.matrix;
    let k2 = m.mul(m);
    // τ(∂_i, K∂_j)^l = Σ_b K^b_j τ^l_ib, shared across k.
    let mixed: Vec<Expr> = (0..d * d * d)
        .map(|idx| {
            let (l, i, j) = (idx / (d * d), (idx / d) % d, idx % d);
            Expr::sum(
                (0..d)
                    .filter_map(|b| prod(&m[(b, j)], tau.get(l, i, b)))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let mixed_at = |l: usize, i: usize, j: usize| &mixed[(l * d + i) * d + j];
    TorsionField::from_upper(&k.chart, d, |kk, i, j| {
        let mut terms = Vec::new();
        for l in 0..d {
            terms.extend(prod(&k2[(kk, l)], tau.get(l, i, j)));
        }
        for a in 0..d {
            if m[(a, i)].is_literal_zero() {
                continue;
            }
            for b in 0..d {
                if let Some(ab) = prod(&m[(a, i)], &m[(b, j)]) {
                    terms.extend(prod(&ab, tau.get(kk, a, b)));
                }
            }
        }
        for l in 0..d {
            if m[(kk, l)].is_literal_zero() {
                continue;
            }
            // τ(∂_i, K∂_j) + τ(K∂_i, ∂_j) = mixed(l,i,j) − mixed(l,j,i)
            let inner = Expr::sum([mixed_at(l, i, j).clone(), -mixed_at(l, j, i)]);
            terms.extend(prod(&m[(kk, l)], &inner).map(|t| -t));
        }
        Expr::sum(terms)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HaantjesError {
    #[error("pivot H{pivot} has identically vanishing derivative in `{momentum}`")]
    PivotUnusable { pivot: usize, momentum: String },
    #[error("pivot index {0} out of range")]
    PivotRange(usize),
    #[error(transparent)]
    Zero(#[from] ZeroError),
}

/// The eigenvalue fields `μ_i = (∂H_j/∂p_i) / (∂H_pivot/∂p_i)`, one row per `j`.
pub fn chain_eigenvalues(
    sys: &HamiltonianSystem,
    pivot: usize,
    cfg: &ZeroConfig,
) -> Result<Vec<Vec<Expr>>, HaantjesError> {
    if pivot >= sys.len() {
        return Err(HaantjesError::PivotRange(pivot + 1));
    }
    let chart = &sys.chart;
    let denominators: Vec<Expr> = chart
        .momenta()
        .iter()
        .map(|p| sys.hamiltonians[pivot].diff(p))
        .collect();
    for (i, den) in denominators.iter().enumerate() {
        if is_zero(den, cfg)?.is_zero() {
            return Err(HaantjesError::PivotUnusable {
                pivot: pivot + 1,
                momentum: chart.momentum(i).to_string(),
            });
        }
    }
    Ok(sys
        .hamiltonians
        .iter()
        .enumerate()
        .map(|(j, h)| {
            chart
                .momenta()
                .iter()
                .zip(&denominators)
                .map(|(p, den)| {
                    if j == pivot {
                        Expr::one()
                    } else {
                        simplify(&(h.diff(p) / den))
                    }
                })
                .collect()
        })
        .collect())
}

/// Diagonal operators `K_j = Σ_i μ_i (∂_{q^i}⊗dq^i + ∂_{p_i}⊗dp_i)`.
pub fn build_chain_operators(
    sys: &HamiltonianSystem,
    pivot: usize,
    cfg: &ZeroConfig,
) -> Result<Vec<TensorField11>, HaantjesError> {
    Ok(chain_eigenvalues(sys, pivot, cfg)?
        .into_iter()
        .map(|mu| {
            let doubled: Vec<Expr> = mu.iter().chain(&mu).cloned().collect();
            TensorField11::new(sys.chart.clone(), Matrix::diagonal(&doubled))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainVerdict {
    /// The 1-form `Kᵀ dH`.
    pub alpha: Vec<Expr>,
    /// Index pairs `(a, b)` where `∂_a α_b − ∂_b α_a` is not zero.
    pub failures: Vec<(usize, usize)>,
}

impl ChainVerdict {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `α = Kᵀ dH`, i.e. `α_j = Σ_i K^i_j ∂_i H`.
pub fn chain_form(k: &TensorField11, h: &Expr) -> Vec<Expr> {
    let grad: Vec<Expr> = k.chart.phase_vars().iter().map(|v| h.diff(v)).collect();
    k.matrix.transpose().apply(&grad)
}

/// Closedness of `Kᵀ dH`.
pub fn chain_check(
    k: &TensorField11,
    h: &Expr,
    cfg: &ZeroConfig,
) -> Result<ChainVerdict, ZeroError> {
    let alpha = chain_form(k, h);
    let vars = k.chart.phase_vars();
    let d = vars.len();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|a| (a + 1..d).map(move |b| (a, b)))
        .collect();
    let results: Result<Vec<_>, ZeroError> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let curl = alpha[b].diff(&vars[a]) - alpha[a].diff(&vars[b]);
            is_zero(
                &curl,
                &cfg.with_seed(derive_seed(cfg.seed, (a * d + b) as u64)),
            )
            .map(|v| ((a, b), v.is_zero()))
        })
        .collect();
    let failures = results?
        .into_iter()
        .filter(|(_, ok)| !ok)
        .map(|(ab, _)| ab)
        .collect();
    Ok(ChainVerdict { alpha, failures })
}

/// Whether `Kᵀ dH = dG` componentwise.
pub fn chain_potential_matches(
    k: &TensorField11,
    h: &Expr,
    g: &Expr,
    cfg: &ZeroConfig,
) -> Result<bool, ZeroError> {
    let alpha = chain_form(k, h);
    for (a, v) in k.chart.phase_vars().iter().enumerate() {
        if !is_zero(&(&alpha[a] - &g.diff(v)), cfg)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `ω(X, KY) = ω(KX, Y)`, i.e. `ΩK − KᵀΩ = 0` entrywise. Returns failing entries.
pub fn compatibility_check(
    k: &TensorField11,
    cfg: &ZeroConfig,
) -> Result<Vec<(usize, usize)>, ZeroError> {
    let omega = k.chart.darboux();
    let d = k.dim();
    let om = Matrix::from_fn(d, |i, j| Expr::int(omega[i][j]));
    let diff = om.mul(&k.matrix).sub(&k.matrix.transpose().mul(&om));
    let mut failures = Vec::new();
    for ((i, j), e) in diff.entries() {
        if !is_zero(e, cfg)?.is_zero() {
            failures.push((i, j));
        }
    }
    Ok(failures)
}

/// One line of an algebra check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraEntry {
    pub check: String,
    pub operators: (usize, usize),
    pub passed: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraReport {
    pub entries: Vec<AlgebraEntry>,
}

impl AlgebraReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AlgebraEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

/// `count` pairs of random polynomial coefficient functions on the chart,
/// each a constant plus three monomials of degree at most two.
pub fn random_coefficients(chart: &Chart, count: usize, seed: u64) -> Vec<(Expr, Expr)> {
    let vars = chart.vars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one = |rng: &mut ChaCha8Rng| {
        let mut terms = vec![Expr::ratio(rng.gen_range(1..=8), rng.gen_range(1..=4))];
        for _ in 0..3 {
            let c = Expr::ratio(rng.gen_range(-8..=8), rng.gen_range(1..=4));
            let a = &vars[rng.gen_range(0..vars.len())];
            let b = if rng.gen_bool(0.5) {
                vars[rng.gen_range(0..vars.len())].clone()
            } else {
                Expr::one()
            };
            terms.push(Expr::product([c, a.clone(), b]));
        }
        Expr::sum(terms)
    };
    (0..count).map(|_| (one(&mut rng), one(&mut rng))).collect()
}

/// Commutativity, closure under composition and closure under
/// function-linear combinations, for every unordered pair of operators.
pub fn algebra_checks(
    ops: &[TensorField11],
    samples: &[(Expr, Expr)],
    cfg: &ZeroConfig,
) -> Result<AlgebraReport, ZeroError> {
    let m = ops.len();
    let mut jobs: Vec<(String, usize, usize, Option<usize>)> = Vec::new();
    for a in 0..m {
        for b in a..m {
            if a != b {
                jobs.push(("commutator".into(), a, b, None));
            }
            jobs.push(("product-haantjes".into(), a, b, None));
            if a != b {
                for s in 0..samples.len() {
                    jobs.push(("combination-haantjes".into(), a, b, Some(s)));
                }
            }
        }
    }
    let entries: Result<Vec<AlgebraEntry>, ZeroError> = jobs
        .par_iter()
        .enumerate()
        .map(|(n, (check, a, b, s))| {
            let cfg = cfg.with_seed(derive_seed(cfg.seed, n as u64));
            let (ka, kb) = (&ops[*a], &ops[*b]);
            let failure = match check.as_str() {
                "commutator" => {
                    let c = ka.matrix.mul(&kb.matrix).sub(&kb.matrix.mul(&ka.matrix));
                    let mut bad = None;
                    for ((i, j), e) in c.entries() {
                        if !is_zero(e, &cfg)?.is_zero() {
                            bad = Some(format!("entry ({},{})", i + 1, j + 1));
                            break;
                        }
                    }
                    bad
                }
                "product-haantjes" => first_nonzero(&haantjes_torsion(&ka.compose(kb)), &cfg)?,
                _ => {
                    let (f, g) = &samples[s.unwrap()];
                    let detail = first_nonzero(&haantjes_torsion(&ka.combine(f, kb, g)), &cfg)?;
                    detail.map(|d| format!("{d} with f = {f}, g = {g}"))
                }
            };
            Ok(AlgebraEntry {
                check: check.clone(),
                operators: (a + 1, b + 1),
                passed: failure.is_none(),
                detail: failure,
            })
        })
        .collect();
    Ok(AlgebraReport { entries: entries? })
}

fn first_nonzero(t: &TorsionField, cfg: &ZeroConfig) -> Result<Option<String>, ZeroError> {
    Ok(t.nonzero_components(cfg)?
        .into_iter()
        .next()
        .map(|(k, i, j)| format!("component ({},{},{})", k + 1, i + 1, j + 1)))
}

/// How the eigenvalue quotient is rebuilt from cofactors of the lift matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CofactorVariant {
    /// `S̃_jr ∂f_r + ∂_{p_r} S̃_{j,n+1} f_{n+1}` for every `r`.
    Summed,
    /// The same with the second term gated by `δ_jr` (and `δ_1r` for the pivot).
    Literal,
}

/// Rebuild `μ` for operator `j` and slot `r` from the cofactors and compare
/// with the derivative quotient. Returns the mismatching `(j, r)` pairs, 1-based.
pub fn cofactor_cross_check(
    lift: &LiftMatrix,
    f: &[Expr],
    sys: &HamiltonianSystem,
    pivot: usize,
    variant: CofactorVariant,
    cfg: &ZeroConfig,
) -> Result<Vec<(usize, usize)>, HaantjesError> {
    let mu = chain_eigenvalues(sys, pivot, cfg)?;
    let adj = lift.entries.adjugate();
    let size = lift.size();
    let last = size - 1;
    let chart = &sys.chart;
    let numerator = |j: usize, r: usize| {
        let p = chart.momentum(r);
        let main = &adj[(j, r)] * &f[r].diff(p);
        let gated = match variant {
            CofactorVariant::Summed => true,
            CofactorVariant::Literal => j == r,
        };
        if r == last || !gated {
            main
        } else {
            main + adj[(j, last)].diff(p) * &f[last]
        }
    };
    let mut mismatches = Vec::new();
    for (j, mu_j) in mu.iter().enumerate() {
        for (r, mu_jr) in mu_j.iter().enumerate() {
            let quotient = numerator(j, r) / numerator(pivot, r);
            let seed = derive_seed(cfg.seed, (j * size + r) as u64);
            let ok = match is_zero(&(quotient - mu_jr), &cfg.with_seed(seed)) {
                Ok(v) => v.is_zero(),
                Err(ZeroError::Inconclusive { .. }) => false,
                Err(e) => return Err(e.into()),
            };
            if !ok {
                mismatches.push((j + 1, r + 1));
            }
        }
    }
    Ok(mismatches)
}
