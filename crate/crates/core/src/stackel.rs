//! Stäckel and lifted Stäckel matrices and the Hamiltonian families they generate.
//!
//! Given an invertible matrix `S` whose rows are local in the separated
//! variables and Stäckel functions `f_a(q^a, p_a)`, the family `H = S⁻¹ f`
//! solves the separation relations `Σ_k S_ak H_k = f_a` row by row.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::Chart;
use crate::expr::{
    expand, is_zero, simplify, Expr, Node, Substitution, Symbol, ZeroConfig, ZeroError,
};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeMode {
    /// Row `a` depends only on `q^a`.
    Classical,
    /// Classical block plus a last column that may carry `p_a`, and a last
    /// row that vanishes except for its diagonal entry.
    Lifted,
    /// Row `a` depends only on `(q^a, p_a)`.
    Generalized,
}

impl fmt::Display for ShapeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeMode::Classical => "classical",
            ShapeMode::Lifted => "lifted",
            ShapeMode::Generalized => "generalized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StackelError {
    #[error("matrix is {size}x{size} but the chart has {dim} degrees of freedom")]
    SizeMismatch { size: usize, dim: usize },
    #[error("entry ({row},{col}) depends on `{var}`, not allowed in {mode} shape")]
    StrayVariable {
        row: usize,
        col: usize,
        var: String,
        mode: ShapeMode,
    },
    #[error("entry ({row},{col}) of the last row must vanish in lifted shape")]
    NonzeroLastRow { row: usize, col: usize },
    #[error("last diagonal entry vanishes identically")]
    VanishingCorner,
    #[error("Stäckel function {index} depends on `{var}`")]
    NonLocalFunction { index: usize, var: String },
    #[error("determinant vanishes identically")]
    Singular,
    #[error("{expected} Stäckel functions expected, got {found}")]
    FunctionCount { expected: usize, found: usize },
    #[error("recipe references unknown Hamiltonian slot `{0}`")]
    UnknownSlot(String),
    #[error("recipe references `{0}`, which is neither a slot nor a chart variable")]
    UnknownSymbol(String),
    #[error("invalid permutation {0:?}")]
    BadPermutation(Vec<usize>),
    #[error(transparent)]
    Zero(#[from] ZeroError),
}

/// A square matrix together with the row-locality it claims.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftMatrix {
    pub entries: Matrix,
    pub mode: ShapeMode,
}

impl LiftMatrix {
    pub fn new(entries: Matrix, mode: ShapeMode) -> Self {
        LiftMatrix { entries, mode }
    }

    pub fn size(&self) -> usize {
        self.entries.size()
    }
}

/// Where the Hamiltonians of a system came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Manual,
    Akn {
        matrix: Vec<Vec<String>>,
        functions: Vec<String>,
    },
    Derived {
        recipe: Vec<String>,
        from: Box<Provenance>,
    },
    Permuted {
        permutation: Vec<usize>,
        from: Box<Provenance>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSystem {
    pub chart: Chart,
    pub hamiltonians: Vec<Expr>,
    pub provenance: Provenance,
}

impl HamiltonianSystem {
    pub fn manual(chart: Chart, hamiltonians: Vec<Expr>) -> Self {
        HamiltonianSystem {
            chart,
            hamiltonians,
            provenance: Provenance::Manual,
        }
    }

    pub fn len(&self) -> usize {
        self.hamiltonians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hamiltonians.is_empty()
    }
}

/// Check that every entry only involves the variables its row is allowed.
pub fn validate_shape(m: &LiftMatrix, chart: &Chart) -> Result<(), StackelError> {
    let size = m.size();
    if size != chart.dim() {
        return Err(StackelError::SizeMismatch {
            size,
            dim: chart.dim(),
        });
    }
    let last = size - 1;
    for ((row, col), e) in m.entries.entries() {
        let q = chart.coord(row);
        let p = chart.momentum(row);
        if m.mode == ShapeMode::Lifted && row == last && col != last {
            if !e.is_literal_zero() {
                return Err(StackelError::NonzeroLastRow {
                    row: row + 1,
                    col: col + 1,
                });
            }
            continue;
        }
        let momentum_ok = match m.mode {
            ShapeMode::Classical => false,
            ShapeMode::Lifted => col == last,
            ShapeMode::Generalized => true,
        };
        for v in e.free_vars() {
            let ok = &*v == q || (momentum_ok && &*v == p);
            if !ok {
                return Err(StackelError::StrayVariable {
                    row: row + 1,
                    col: col + 1,
                    var: v.to_string(),
                    mode: m.mode,
                });
            }
        }
    }
    if m.mode == ShapeMode::Lifted {
        let corner = &m.entries[(last, last)];
        if is_zero(corner, &ZeroConfig::default())?.is_zero() {
            return Err(StackelError::VanishingCorner);
        }
    }
    Ok(())
}

/// Each `f_k` may depend only on `(q^k, p_k)`.
pub fn validate_functions(f: &[Expr], chart: &Chart) -> Result<(), StackelError> {
    if f.len() != chart.dim() {
        return Err(StackelError::FunctionCount {
            expected: chart.dim(),
            found: f.len(),
        });
    }
    for (k, fk) in f.iter().enumerate() {
        for v in fk.free_vars() {
            if &*v != chart.coord(k) && &*v != chart.momentum(k) {
                return Err(StackelError::NonLocalFunction {
                    index: k + 1,
                    var: v.to_string(),
                });
            }
        }
    }
    Ok(())
}

/// Inverse by adjugate over determinant.
pub fn invert(m: &Matrix, cfg: &ZeroConfig) -> Result<Matrix, StackelError> {
    let det = m.det();
    if is_zero(&det, cfg)?.is_zero() {
        return Err(StackelError::Singular);
    }
    let inv_det = det.recip();
    Ok(m.adjugate().map(|c| simplify(&(c * &inv_det))))
}

/// The family `H = S⁻¹ f`.
pub fn akn_system(
    lift: &LiftMatrix,
    f: &[Expr],
    chart: &Chart,
    cfg: &ZeroConfig,
) -> Result<HamiltonianSystem, StackelError> {
    validate_shape(lift, chart)?;
    validate_functions(f, chart)?;
    let inv = invert(&lift.entries, cfg)?;
    let hamiltonians = inv.apply(f).iter().map(simplify).collect();
    Ok(HamiltonianSystem {
        chart: chart.clone(),
        hamiltonians,
        provenance: Provenance::Akn {
            matrix: lift
                .entries
                .rows()
                .iter()
                .map(|r| r.iter().map(|e| e.to_string()).collect())
                .collect(),
            functions: f.iter().map(|e| e.to_string()).collect(),
        },
    })
}

/// `f_a − Σ_k L_ak H_k` for every row `a`, including the lift row.
pub fn separation_residuals(lift: &LiftMatrix, f: &[Expr], sys: &HamiltonianSystem) -> Vec<Expr> {
    let lh = lift.entries.apply(&sys.hamiltonians);
    f.iter().zip(lh).map(|(fa, la)| fa - la).collect()
}

fn slot_index(name: &str) -> Option<usize> {
    name.strip_prefix('H')?
        .parse::<usize>()
        .ok()
        .filter(|&k| k >= 1)
}

/// New family whose members are the recipe expressions, each written in the
/// slots `H1..Hm` of `sys` and chart variables.
pub fn change_basis(
    sys: &HamiltonianSystem,
    recipe: &[Expr],
) -> Result<HamiltonianSystem, StackelError> {
    let mut subst = Substitution::new();
    for r in recipe {
        for v in r.free_vars() {
            match slot_index(&v) {
                Some(k) if k <= sys.len() => {
                    subst.insert_var(&v, sys.hamiltonians[k - 1].clone());
                }
                Some(_) => return Err(StackelError::UnknownSlot(v.to_string())),
                None if sys.chart.contains(&v) => {}
                None => return Err(StackelError::UnknownSymbol(v.to_string())),
            }
        }
    }
    let hamiltonians = recipe
        .iter()
        .map(|r| {
            subst
                .apply(r)
                .expect("slot substitution has no function replacements")
        })
        .collect();
    Ok(HamiltonianSystem {
        chart: sys.chart.clone(),
        hamiltonians,
        provenance: Provenance::Derived {
            recipe: recipe.iter().map(|e| e.to_string()).collect(),
            from: Box::new(sys.provenance.clone()),
        },
    })
}

/// Reorder the family: slot `i` of the result is slot `perm[i]` (1-based) of `sys`.
pub fn permute(sys: &HamiltonianSystem, perm: &[usize]) -> Result<HamiltonianSystem, StackelError> {
    let mut seen = vec![false; sys.len()];
    for &k in perm {
        if k == 0 || k > sys.len() || std::mem::replace(&mut seen[k - 1], true) {
            return Err(StackelError::BadPermutation(perm.to_vec()));
        }
    }
    if perm.len() != sys.len() {
        return Err(StackelError::BadPermutation(perm.to_vec()));
    }
    Ok(HamiltonianSystem {
        chart: sys.chart.clone(),
        hamiltonians: perm
            .iter()
            .map(|&k| sys.hamiltonians[k - 1].clone())
            .collect(),
        provenance: Provenance::Permuted {
            permutation: perm.to_vec(),
            from: Box::new(sys.provenance.clone()),
        },
    })
}

/// Lowest and highest total momentum degree over the terms of the expansion,
/// or `None` when momenta enter non-polynomially (inside opaque symbols,
/// `exp`, denominators or fractional powers).
pub fn momentum_degree(e: &Expr, chart: &Chart) -> Option<(u32, u32)> {
    let expanded = expand(e)?;
    let terms: Vec<Expr> = match expanded.node() {
        Node::Add(ts) => ts.clone(),
        _ => vec![expanded],
    };
    let momenta: BTreeMap<Symbol, ()> = chart.momenta().iter().map(|m| (m.clone(), ())).collect();
    let mut lo = u32::MAX;
    let mut hi = 0;
    for t in &terms {
        if t.is_literal_zero() {
            continue;
        }
        let factors: Vec<Expr> = match t.node() {
            Node::Mul(fs) => fs.clone(),
            _ => vec![t.clone()],
        };
        let mut degree = 0u32;
        for f in factors {
            match f.node() {
                Node::Var(v) if momenta.contains_key(v) => degree += 1,
                Node::Pow(b, r) if matches!(b.as_var(), Some(v) if momenta.contains_key(v)) => {
                    if !r.is_integer() || r.is_negative() {
                        return None;
                    }
                    degree += r.to_integer().to_u32()?;
                }
                _ => {
                    if f.free_vars().iter().any(|v| momenta.contains_key(v)) {
                        return None;
                    }
                }
            }
        }
        lo = lo.min(degree);
        hi = hi.max(degree);
    }
    if lo == u32::MAX {
        lo = 0;
    }
    Some((lo, hi))
}

/// True when every term has momentum degree exactly `d`; `None` if unknown.
pub fn is_homogeneous(e: &Expr, chart: &Chart, d: u32) -> Option<bool> {
    momentum_degree(e, chart).map(|(lo, hi)| lo == d && hi == d)
}
