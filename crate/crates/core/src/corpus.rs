//! Declarative system definitions and the built-in corpus.
//!
//! A definition is a TOML document holding a chart, a (lifted) Stäckel
//! matrix, the Stäckel functions and everything needed to check the
//! resulting family: how to reach the printed form from the raw one,
//! alternative bases, expected expressions, canonical transforms and a
//! concretization for numerical flows.
//!
//! Generated forms, in order:
//!
//! * `raw`: `S⁻¹ f` as produced by the matrix.
//! * `printed`: `raw` reordered by the permutation flag, then rewritten by
//!   the `[printed]` recipe (slots `H1..Hm` refer to the reordered family).
//! * `specialized`: `printed` with the `[specialize]` replacements applied.
//! * one form per `[[basis]]` entry, built from `specialized` when present
//!   and from `printed` otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::Chart;
use crate::dynamics::{assign_point, Method};
use crate::expr::{parse, Expr, Lambda, ParseError, SubstError, Substitution, Symbol, ZeroConfig};
use crate::matrix::Matrix;
use crate::poisson::{CanonicalTransform, TransformError};
use crate::stackel::{
    akn_system, change_basis, permute, validate_shape, HamiltonianSystem, LiftMatrix, ShapeMode,
    StackelError,
};

const BUILTINS: &[(&str, &str)] = &[
    (
        "cartesian-2d-seed",
        include_str!("../corpus/cartesian-2d-seed.toml"),
    ),
    (
        "riemannian-eisenhart-2d",
        include_str!("../corpus/riemannian-eisenhart-2d.toml"),
    ),
    (
        "algebra-A2-haantjes",
        include_str!("../corpus/algebra-A2-haantjes.toml"),
    ),
    (
        "stackel-riem-lift-3d",
        include_str!("../corpus/stackel-riem-lift-3d.toml"),
    ),
    (
        "iterated-lift-4d",
        include_str!("../corpus/iterated-lift-4d.toml"),
    ),
    (
        "platonic-wave-4d",
        include_str!("../corpus/platonic-wave-4d.toml"),
    ),
    (
        "lorentzian-wave-4d",
        include_str!("../corpus/lorentzian-wave-4d.toml"),
    ),
    (
        "nongeodesic-quadratic-3d",
        include_str!("../corpus/nongeodesic-quadratic-3d.toml"),
    ),
    (
        "transcendental-3d",
        include_str!("../corpus/transcendental-3d.toml"),
    ),
    (
        "linear-term-lift-4d",
        include_str!("../corpus/linear-term-lift-4d.toml"),
    ),
    (
        "cylindrical-case-1",
        include_str!("../corpus/cylindrical-case-1.toml"),
    ),
    (
        "cylindrical-case-2",
        include_str!("../corpus/cylindrical-case-2.toml"),
    ),
    (
        "cylindrical-case-3",
        include_str!("../corpus/cylindrical-case-3.toml"),
    ),
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Toml { origin: String, message: String },
    #[error("{name}: {field}: {source}")]
    Expr {
        name: String,
        field: String,
        source: ParseError,
    },
    #[error("{name}: {field}: `{var}` is not a variable of the chart")]
    StrayVariable {
        name: String,
        field: String,
        var: String,
    },
    #[error("{name}: {source}")]
    Stackel { name: String, source: StackelError },
    #[error("{name}: {source}")]
    Transform {
        name: String,
        source: TransformError,
    },
    #[error("{name}: {message}")]
    Invalid { name: String, message: String },
    #[error("unknown system `{name}`; available: {}", .available.join(", "))]
    Unknown {
        name: String,
        available: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub mode: ShapeMode,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrintedSpec {
    pub recipe: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub name: String,
    pub recipe: Vec<String>,
    /// Momenta whose squares must appear in the first member, which must
    /// then also be at most quadratic in the momenta.
    #[serde(default)]
    pub diagonal: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    /// 1-based slot of the printed family generating the operator.
    pub hamiltonian: usize,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedSpec {
    #[serde(default)]
    pub hamiltonians: Vec<String>,
    #[serde(default)]
    pub operators: Vec<OperatorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushSpec {
    /// `printed`, `specialized` or the name of a basis.
    pub form: String,
    pub hamiltonian: usize,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub name: String,
    pub target: Chart,
    pub forward: Vec<String>,
    #[serde(default)]
    pub push: Vec<PushSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub hamiltonian: usize,
    pub ic: String,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_method")]
    pub method: Method,
}

impl Default for DynamicsSpec {
    fn default() -> Self {
        DynamicsSpec {
            hamiltonian: 1,
            ic: String::new(),
            duration: default_duration(),
            dt: default_dt(),
            method: default_method(),
        }
    }
}

fn default_duration() -> f64 {
    10.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_method() -> Method {
    Method::Rk4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// The system satisfies the hypotheses of the chain-operator theorem.
    pub theorem: bool,
    #[serde(default = "default_pivot")]
    pub pivot: usize,
    /// Slot `i` of the printed family is slot `permutation[i]` of the raw one.
    #[serde(default)]
    pub permutation: Option<Vec<usize>>,
}

fn default_pivot() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDefinition {
    pub name: String,
    pub description: String,
    pub functions: Vec<String>,
    pub chart: Chart,
    pub matrix: MatrixSpec,
    pub flags: Flags,
    #[serde(default)]
    pub printed: Option<PrintedSpec>,
    #[serde(default)]
    pub specialize: BTreeMap<String, String>,
    #[serde(default)]
    pub basis: Vec<BasisSpec>,
    #[serde(default)]
    pub expected: Option<ExpectedSpec>,
    #[serde(default)]
    pub transform: Vec<TransformSpec>,
    #[serde(default)]
    pub concretization: BTreeMap<String, String>,
    #[serde(default)]
    pub dynamics: Option<DynamicsSpec>,
}

/// A transform with its push-forward expectations, parsed.
#[derive(Debug, Clone)]
pub struct TransformEntry {
    pub name: String,
    pub transform: CanonicalTransform,
    pub push: Vec<(String, usize, Expr)>,
}

/// A definition with every expression parsed and checked.
#[derive(Debug, Clone)]
pub struct CorpusSystem {
    pub definition: SystemDefinition,
    pub lift: LiftMatrix,
    pub functions: Vec<Expr>,
    pub printed_recipe: Option<Vec<Expr>>,
    pub specialize: Option<Substitution>,
    pub bases: Vec<(String, Vec<Expr>, Vec<String>)>,
    pub expected_hamiltonians: Vec<Expr>,
    pub expected_operators: Vec<(usize, Matrix)>,
    pub transforms: Vec<TransformEntry>,
    pub concretization: Substitution,
    pub initial_condition: Option<Vec<f64>>,
}

/// The generated families of one definition.
#[derive(Debug, Clone)]
pub struct Forms {
    pub raw: HamiltonianSystem,
    pub printed: HamiltonianSystem,
    pub specialized: Option<HamiltonianSystem>,
    pub bases: Vec<(String, HamiltonianSystem)>,
}

impl Forms {
    /// The form that specialization-dependent checks work on.
    pub fn working(&self) -> &HamiltonianSystem {
        self.specialized.as_ref().unwrap_or(&self.printed)
    }

    pub fn get(&self, name: &str) -> Option<&HamiltonianSystem> {
        match name {
            "raw" => Some(&self.raw),
            "printed" => Some(&self.printed),
            "specialized" => self.specialized.as_ref(),
            _ => self.bases.iter().find(|(n, _)| n == name).map(|(_, s)| s),
        }
    }
}

struct Ctx<'a> {
    name: &'a str,
}

impl Ctx<'_> {
    fn expr(
        &self,
        field: impl Into<String>,
        text: &str,
        allowed: &BTreeSet<Symbol>,
    ) -> Result<Expr, CorpusError> {
        let field = field.into();
        let e = parse(text).map_err(|source| CorpusError::Expr {
            name: self.name.into(),
            field: field.clone(),
            source,
        })?;
        if let Some(var) = e.free_vars().into_iter().find(|v| !allowed.contains(v)) {
            return Err(CorpusError::StrayVariable {
                name: self.name.into(),
                field,
                var: var.to_string(),
            });
        }
        Ok(e)
    }

    fn lambda(&self, field: String, text: &str) -> Result<Lambda, CorpusError> {
        let l: Lambda = text.parse().map_err(|source| CorpusError::Expr {
            name: self.name.into(),
            field: field.clone(),
            source,
        })?;
        let params: BTreeSet<Symbol> = l.params.iter().cloned().collect();
        if let Some(var) = l.body.free_vars().into_iter().find(|v| !params.contains(v)) {
            return Err(CorpusError::StrayVariable {
                name: self.name.into(),
                field,
                var: var.to_string(),
            });
        }
        Ok(l)
    }

    fn substitution(
        &self,
        section: &str,
        map: &BTreeMap<String, String>,
    ) -> Result<Substitution, CorpusError> {
        let mut s = Substitution::new();
        for (k, v) in map {
            s.insert_func(k, self.lambda(format!("{section}.{k}"), v)?);
        }
        Ok(s)
    }

    fn invalid(&self, message: impl Into<String>) -> CorpusError {
        CorpusError::Invalid {
            name: self.name.into(),
            message: message.into(),
        }
    }
}

fn slots(m: usize, chart: &Chart) -> BTreeSet<Symbol> {
    let mut s = chart.symbols();
    s.extend((1..=m).map(|k| Symbol::from(format!("H{k}"))));
    s
}

impl SystemDefinition {
    pub fn from_toml(text: &str, origin: &str) -> Result<SystemDefinition, CorpusError> {
        let def: SystemDefinition = toml::from_str(text).map_err(|e| CorpusError::Toml {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        def.compile()?;
        Ok(def)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("definitions serialize")
    }

    /// Parse every expression and check shapes and variable references.
    pub fn compile(&self) -> Result<CorpusSystem, CorpusError> {
        let cx = Ctx { name: &self.name };
        let chart = &self.chart;
        let vars = chart.symbols();
        let n = chart.dim();

        if self.matrix.rows.len() != n {
            return Err(cx.invalid(format!(
                "matrix has {} rows, chart has {n} degrees of freedom",
                self.matrix.rows.len()
            )));
        }
        let mut rows = Vec::with_capacity(n);
        for (i, row) in self.matrix.rows.iter().enumerate() {
            if row.len() != n {
                return Err(cx.invalid(format!(
                    "matrix row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            let parsed = row
                .iter()
                .enumerate()
                .map(|(j, s)| cx.expr(format!("matrix row {}, column {}", i + 1, j + 1), s, &vars))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(parsed);
        }
        let lift = LiftMatrix::new(Matrix::from_rows(rows), self.matrix.mode);
        validate_shape(&lift, chart).map_err(|source| CorpusError::Stackel {
            name: self.name.clone(),
            source,
        })?;

        let functions = self
            .functions
            .iter()
            .enumerate()
            .map(|(i, s)| cx.expr(format!("function {}", i + 1), s, &vars))
            .collect::<Result<Vec<_>, _>>()?;
        crate::stackel::validate_functions(&functions, chart).map_err(|source| {
            CorpusError::Stackel {
                name: self.name.clone(),
                source,
            }
        })?;

        if let Some(p) = &self.flags.permutation {
            let mut sorted = p.clone();
            sorted.sort_unstable();
            if sorted != (1..=n).collect::<Vec<_>>() {
                return Err(cx.invalid(format!("permutation {p:?} is not a permutation of 1..{n}")));
            }
        }

        let slot_vars = slots(n, chart);
        let printed_recipe = match &self.printed {
            Some(p) => Some(
                p.recipe
                    .iter()
                    .enumerate()
                    .map(|(i, s)| cx.expr(format!("printed recipe {}", i + 1), s, &slot_vars))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        let m = printed_recipe.as_ref().map_or(n, Vec::len);
        if self.flags.pivot == 0 || self.flags.pivot > m {
            return Err(cx.invalid(format!("pivot H{} out of range", self.flags.pivot)));
        }

        let specialize = if self.specialize.is_empty() {
            None
        } else {
            Some(cx.substitution("specialize", &self.specialize)?)
        };

        let basis_vars = slots(m, chart);
        let mut bases = Vec::new();
        for b in &self.basis {
            if matches!(b.name.as_str(), "raw" | "printed" | "specialized") {
                return Err(cx.invalid(format!("basis name `{}` is reserved", b.name)));
            }
            let recipe = b
                .recipe
                .iter()
                .enumerate()
                .map(|(i, s)| cx.expr(format!("basis {} recipe {}", b.name, i + 1), s, &basis_vars))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(p) = b.diagonal.iter().find(|p| !chart.is_momentum(p)) {
                return Err(cx.invalid(format!("basis {}: `{p}` is not a momentum", b.name)));
            }
            bases.push((b.name.clone(), recipe, b.diagonal.clone()));
        }

        let expected = self.expected.clone().unwrap_or_default();
        let expected_hamiltonians = expected
            .hamiltonians
            .iter()
            .enumerate()
            .map(|(i, s)| cx.expr(format!("expected H{}", i + 1), s, &vars))
            .collect::<Result<Vec<_>, _>>()?;
        if !expected_hamiltonians.is_empty() && expected_hamiltonians.len() != m {
            return Err(cx.invalid(format!(
                "{} expected Hamiltonians for a family of {m}",
                expected_hamiltonians.len()
            )));
        }
        let d = chart.phase_dim();
        let mut expected_operators = Vec::new();
        for op in &expected.operators {
            if op.hamiltonian == 0 || op.hamiltonian > m {
                return Err(cx.invalid(format!(
                    "expected operator for H{} out of range",
                    op.hamiltonian
                )));
            }
            if op.rows.len() != d || op.rows.iter().any(|r| r.len() != d) {
                return Err(cx.invalid(format!(
                    "expected operator for H{} is not {d}x{d}",
                    op.hamiltonian
                )));
            }
            let rows = op
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .map(|(j, s)| {
                            cx.expr(
                                format!("operator K{} entry ({},{})", op.hamiltonian, i + 1, j + 1),
                                s,
                                &vars,
                            )
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            expected_operators.push((op.hamiltonian, Matrix::from_rows(rows)));
        }

        let mut transforms = Vec::new();
        for t in &self.transform {
            let forward = t
                .forward
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    cx.expr(
                        format!("transform {} component {}", t.name, i + 1),
                        s,
                        &vars,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            let transform = CanonicalTransform::new(chart.clone(), t.target.clone(), forward)
                .map_err(|source| CorpusError::Transform {
                    name: self.name.clone(),
                    source,
                })?;
            let target_vars = t.target.symbols();
            let mut push = Vec::new();
            for p in &t.push {
                let known = matches!(p.form.as_str(), "raw" | "printed")
                    || (p.form == "specialized" && specialize.is_some())
                    || bases.iter().any(|(n, _, _)| *n == p.form);
                if !known {
                    return Err(cx.invalid(format!(
                        "transform {} pushes unknown form `{}`",
                        t.name, p.form
                    )));
                }
                let e = cx.expr(
                    format!("transform {} expected", t.name),
                    &p.expected,
                    &target_vars,
                )?;
                push.push((p.form.clone(), p.hamiltonian, e));
            }
            transforms.push(TransformEntry {
                name: t.name.clone(),
                transform,
                push,
            });
        }

        let concretization = cx.substitution("concretization", &self.concretization)?;
        let initial_condition = match &self.dynamics {
            Some(dy) => {
                if dy.hamiltonian == 0 || dy.hamiltonian > m {
                    return Err(cx.invalid(format!(
                        "dynamics generator H{} out of range",
                        dy.hamiltonian
                    )));
                }
                Some(assign_point(chart, None, &dy.ic).map_err(|e| cx.invalid(e.to_string()))?)
            }
            None => None,
        };

        Ok(CorpusSystem {
            definition: self.clone(),
            lift,
            functions,
            printed_recipe,
            specialize,
            bases,
            expected_hamiltonians,
            expected_operators,
            transforms,
            concretization,
            initial_condition,
        })
    }
}

impl CorpusSystem {
    pub fn name(&self) -> &str {
        &self.definition.name
    }

    pub fn chart(&self) -> &Chart {
        &self.definition.chart
    }

    pub fn raw(&self, cfg: &ZeroConfig) -> Result<HamiltonianSystem, StackelError> {
        akn_system(&self.lift, &self.functions, self.chart(), cfg)
    }

    /// Every form derived from the raw family.
    pub fn forms_from(&self, raw: HamiltonianSystem) -> Result<Forms, FormError> {
        let permuted = match &self.definition.flags.permutation {
            Some(p) => permute(&raw, p)?,
            None => raw.clone(),
        };
        let printed = match &self.printed_recipe {
            Some(r) => change_basis(&permuted, r)?,
            None => permuted,
        };
        let specialized = match &self.specialize {
            Some(s) => Some(HamiltonianSystem {
                chart: printed.chart.clone(),
                hamiltonians: printed
                    .hamiltonians
                    .iter()
                    .map(|h| s.apply(h))
                    .collect::<Result<_, _>>()?,
                provenance: printed.provenance.clone(),
            }),
            None => None,
        };
        let base = specialized.as_ref().unwrap_or(&printed);
        let bases = self
            .bases
            .iter()
            .map(|(name, recipe, _)| Ok((name.clone(), change_basis(base, recipe)?)))
            .collect::<Result<Vec<_>, FormError>>()?;
        Ok(Forms {
            raw,
            printed,
            specialized,
            bases,
        })
    }

    pub fn forms(&self, cfg: &ZeroConfig) -> Result<Forms, FormError> {
        self.forms_from(self.raw(cfg)?)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormError {
    #[error(transparent)]
    Stackel(#[from] StackelError),
    #[error(transparent)]
    Substitution(#[from] SubstError),
}

/// Names of the built-in systems, in corpus order.
pub fn list() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Result<SystemDefinition, CorpusError> {
    let (_, text) =
        BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| CorpusError::Unknown {
                name: name.to_string(),
                available: list().into_iter().map(String::from).collect(),
            })?;
    SystemDefinition::from_toml(text, &format!("builtin {name}"))
}

pub fn builtins() -> Vec<SystemDefinition> {
    list()
        .into_iter()
        .map(|n| builtin(n).expect("builtin definitions are valid"))
        .collect()
}

pub fn load(path: impl AsRef<Path>) -> Result<SystemDefinition, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SystemDefinition::from_toml(&text, &path.display().to_string())
}

/// A builtin name or a path to a definition file.
pub fn resolve(target: &str) -> Result<SystemDefinition, CorpusError> {
    if list().contains(&target) {
        builtin(target)
    } else if Path::new(target).exists() {
        load(target)
    } else {
        builtin(target)
    }
}
