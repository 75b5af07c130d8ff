use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartError {
    #[error("chart has {coords} coordinates but {momenta} momenta")]
    Unbalanced { coords: usize, momenta: usize },
    #[error("duplicate chart variable `{0}`")]
    Duplicate(String),
    #[error("chart is empty")]
    Empty,
}

/// Canonical coordinates `(q^1..q^n, p_1..p_n)` with `ω = Σ dp_i ∧ dq^i`.
///
/// Phase-space indices run over coordinates first, then momenta, so index
/// `i < n` is `q^i` and `n + i` is its conjugate `p_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ChartRepr", into = "ChartRepr")]
pub struct Chart {
    coords: Vec<Symbol>,
    momenta: Vec<Symbol>,
}

#[derive(Serialize, Deserialize)]
struct ChartRepr {
    coordinates: Vec<String>,
    momenta: Vec<String>,
}

impl TryFrom<ChartRepr> for Chart {
    type Error = ChartError;
    fn try_from(r: ChartRepr) -> Result<Self, ChartError> {
        Chart::new(&r.coordinates, &r.momenta)
    }
}

impl From<Chart> for ChartRepr {
    fn from(c: Chart) -> Self {
        ChartRepr {
            coordinates: c.coords.iter().map(|s| s.to_string()).collect(),
            momenta: c.momenta.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Chart {
    pub fn new<S: AsRef<str>>(coords: &[S], momenta: &[S]) -> Result<Chart, ChartError> {
        if coords.len() != momenta.len() {
            return Err(ChartError::Unbalanced {
                coords: coords.len(),
                momenta: momenta.len(),
            });
        }
        if coords.is_empty() {
            return Err(ChartError::Empty);
        }
        let mut seen = BTreeSet::new();
        for name in coords.iter().chain(momenta) {
            if !seen.insert(name.as_ref()) {
                return Err(ChartError::Duplicate(name.as_ref().to_string()));
            }
        }
        Ok(Chart {
            coords: coords.iter().map(|s| Symbol::from(s.as_ref())).collect(),
            momenta: momenta.iter().map(|s| Symbol::from(s.as_ref())).collect(),
        })
    }

    /// `q1..qn, p1..pn`.
    pub fn standard(n: usize) -> Chart {
        let q: Vec<String> = (1..=n).map(|i| format!("q{i}")).collect();
        let p: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
        Chart::new(&q, &p).expect("standard chart is well formed")
    }

    /// Degrees of freedom `n`.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn phase_dim(&self) -> usize {
        2 * self.coords.len()
    }

    pub fn coords(&self) -> &[Symbol] {
        &self.coords
    }

    pub fn momenta(&self) -> &[Symbol] {
        &self.momenta
    }

    pub fn coord(&self, i: usize) -> &str {
        &self.coords[i]
    }

    pub fn momentum(&self, i: usize) -> &str {
        &self.momenta[i]
    }

    /// Phase-space variables in index order.
    pub fn phase_vars(&self) -> Vec<Symbol> {
        self.coords.iter().chain(&self.momenta).cloned().collect()
    }

    pub fn phase_var(&self, a: usize) -> &str {
        let n = self.dim();
        if a < n {
            &self.coords[a]
        } else {
            &self.momenta[a - n]
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.phase_vars().iter().position(|s| &**s == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        self.phase_vars().into_iter().collect()
    }

    pub fn is_momentum(&self, name: &str) -> bool {
        self.momenta.iter().any(|m| &**m == name)
    }

    /// Expressions in phase-space order.
    pub fn vars(&self) -> Vec<Expr> {
        self.phase_vars().into_iter().map(Expr::var_sym).collect()
    }

    /// Components `Ω_ab = ω(∂_a, ∂_b)` of the Darboux form.
    pub fn darboux(&self) -> Vec<Vec<i64>> {
        let n = self.dim();
        let mut omega = vec![vec![0; 2 * n]; 2 * n];
        for i in 0..n {
            omega[n + i][i] = 1;
            omega[i][n + i] = -1;
        }
        omega
    }
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[Symbol]| {
            v.iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        write!(f, "({} | {})", join(&self.coords), join(&self.momenta))
    }
}
