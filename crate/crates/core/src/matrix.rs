use std::fmt;
use std::ops::{Index, IndexMut};

use crate::expr::{is_zero, simplify, Expr, ZeroConfig, ZeroError, ZeroVerdict};

/// Dense square matrix of expressions.
#[derive(Clone, PartialEq, Eq)]
pub struct Matrix {
    n: usize,
    data: Vec<Expr>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<Expr>>) -> Matrix {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Matrix {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Expr) -> Matrix {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Matrix { n, data }
    }

    pub fn zeros(n: usize) -> Matrix {
        Matrix::from_fn(n, |_, _| Expr::zero())
    }

    pub fn identity(n: usize) -> Matrix {
        Matrix::from_fn(n, |i, j| if i == j { Expr::one() } else { Expr::zero() })
    }

    pub fn diagonal(d: &[Expr]) -> Matrix {
        Matrix::from_fn(
            d.len(),
            |i, j| if i == j { d[i].clone() } else { Expr::zero() },
        )
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[Expr] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<Expr>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), &Expr)> {
        self.data
            .iter()
            .enumerate()
            .map(move |(k, e)| ((k / self.n, k % self.n), e))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.n, |i, j| self[(j, i)].clone())
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix::from_fn(self.n, |i, j| {
            Expr::sum((0..self.n).filter_map(|k| {
                let (a, b) = (&self[(i, k)], &other[(k, j)]);
                (!a.is_literal_zero() && !b.is_literal_zero()).then(|| a * b)
            }))
        })
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix::from_fn(self.n, |i, j| &self[(i, j)] + &other[(i, j)])
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix::from_fn(self.n, |i, j| &self[(i, j)] - &other[(i, j)])
    }

    pub fn scale(&self, k: &Expr) -> Matrix {
        self.map(|e| k * e)
    }

    pub fn apply(&self, v: &[Expr]) -> Vec<Expr> {
        (0..self.n)
            .map(|i| Expr::sum((0..self.n).map(|j| &self[(i, j)] * &v[j])))
            .collect()
    }

    pub fn simplified(&self) -> Matrix {
        self.map(simplify)
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries()
            .all(|((i, j), e)| i == j || e.is_literal_zero())
    }

    /// Minor with row `r` and column `c` removed.
    pub fn minor(&self, r: usize, c: usize) -> Matrix {
        let rows = (0..self.n)
            .filter(|&i| i != r)
            .map(|i| {
                (0..self.n)
                    .filter(|&j| j != c)
                    .map(|j| self[(i, j)].clone())
                    .collect()
            })
            .collect();
        Matrix::from_rows(rows)
    }

    /// Laplace expansion along the first row, skipping zero entries.
    pub fn det(&self) -> Expr {
        match self.n {
            0 => Expr::one(),
            1 => self.data[0].clone(),
            2 => simplify(&(&self[(0, 0)] * &self[(1, 1)] - &self[(0, 1)] * &self[(1, 0)])),
            _ => {
                let terms = (0..self.n)
                    .filter(|&j| !self[(0, j)].is_literal_zero())
                    .map(|j| {
                        let sign = if j % 2 == 0 {
                            Expr::one()
                        } else {
                            Expr::int(-1)
                        };
                        Expr::product([sign, self[(0, j)].clone(), self.minor(0, j).det()])
                    });
                simplify(&Expr::sum(terms.collect::<Vec<_>>()))
            }
        }
    }

    pub fn cofactor(&self, i: usize, j: usize) -> Expr {
        let m = self.minor(i, j).det();
        if (i + j) % 2 == 0 {
            m
        } else {
            simplify(&-m)
        }
    }

    pub fn adjugate(&self) -> Matrix {
        if self.n == 1 {
            return Matrix::identity(1);
        }
        Matrix::from_fn(self.n, |i, j| self.cofactor(j, i))
    }

    /// Per-entry zero verdicts.
    pub fn zero_verdicts(
        &self,
        cfg: &ZeroConfig,
    ) -> Result<Vec<((usize, usize), ZeroVerdict)>, ZeroError> {
        self.entries()
            .map(|(ij, e)| is_zero(e, cfg).map(|v| (ij, v)))
            .collect()
    }

    pub fn is_zero(&self, cfg: &ZeroConfig) -> Result<bool, ZeroError> {
        for (_, e) in self.entries() {
            if !is_zero(e, cfg)?.is_zero() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = Expr;
    fn index(&self, (i, j): (usize, usize)) -> &Expr {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Expr {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|e| e.to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.rows())
    }
}
