//! Dense multivariate polynomials used to instantiate opaque function symbols.

use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{int, Expr, Rational};

/// A polynomial in `arity` variables with rational coefficients.
///
/// Derivatives and antiderivatives of any order are computed termwise, so an
/// opaque application `f[o1,..,ok](a1,..,ak)` evaluates exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    arity: usize,
    terms: Vec<(Vec<u32>, Rational)>,
}

impl Polynomial {
    pub fn new(arity: usize, terms: Vec<(Vec<u32>, Rational)>) -> Self {
        assert!(
            terms.iter().all(|(e, _)| e.len() == arity),
            "monomial arity mismatch"
        );
        Polynomial { arity, terms }
    }

    /// Univariate polynomial from ascending coefficients.
    pub fn univariate(coeffs: &[Rational]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| (vec![i as u32], c.clone()))
            .collect();
        Polynomial { arity: 1, terms }
    }

    /// Dense random polynomial of total degree `degree`; coefficients are
    /// rationals in `[-5, 5]` with denominator at most 8.
    pub fn random<R: Rng + ?Sized>(arity: usize, degree: u32, rng: &mut R) -> Self {
        let terms = monomials(arity, degree)
            .into_iter()
            .map(|m| (m, random_rational(rng, -5, 5)))
            .collect();
        Polynomial { arity, terms }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn terms(&self) -> &[(Vec<u32>, Rational)] {
        &self.terms
    }

    /// Coefficient/exponent pairs of `∂^orders p`, with negative orders
    /// meaning repeated integration from zero.
    pub fn derivative_terms(&self, orders: &[i32]) -> Vec<(Vec<u32>, Rational)> {
        assert_eq!(orders.len(), self.arity);
        let mut out = Vec::with_capacity(self.terms.len());
        'term: for (exps, c) in &self.terms {
            let mut coeff = c.clone();
            let mut new_exps = exps.clone();
            for (slot, &order) in orders.iter().enumerate() {
                let e = exps[slot] as i64;
                if order >= 0 {
                    let o = order as i64;
                    if o > e {
                        continue 'term;
                    }
                    for k in 0..o {
                        coeff *= int(e - k);
                    }
                    new_exps[slot] = (e - o) as u32;
                } else {
                    let o = -(order as i64);
                    for k in 1..=o {
                        coeff /= int(e + k);
                    }
                    new_exps[slot] = (e + o) as u32;
                }
            }
            out.push((new_exps, coeff));
        }
        out
    }

    /// Symbolic form in the given argument expressions.
    pub fn to_expr(&self, args: &[Expr]) -> Expr {
        assert_eq!(args.len(), self.arity);
        Expr::sum(self.terms.iter().map(|(exps, c)| {
            let mut factors = vec![Expr::num(c.clone())];
            for (a, &e) in args.iter().zip(exps) {
                if e > 0 {
                    factors.push(Expr::powi(a.clone(), e as i64));
                }
            }
            Expr::product(factors)
        }))
    }
}

/// All exponent vectors in `arity` variables with total degree ≤ `degree`.
pub(crate) fn monomials(arity: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(arity: usize, budget: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == arity {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=budget {
            prefix.push(e);
            rec(arity, budget - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(arity, degree, &mut Vec::new(), &mut out);
    out
}

/// Uniform-ish rational in `[lo, hi]` with denominator in `1..=8`.
pub(crate) fn random_rational<R: Rng + ?Sized>(rng: &mut R, lo: i64, hi: i64) -> Rational {
    let den: i64 = rng.gen_range(1..=8);
    let num: i64 = rng.gen_range(lo * den..=hi * den);
    Rational::new(num.into(), den.into())
}

/// Rational in `[lo_n/lo_d, hi]` for positive boxes like `[1/4, 4]`.
pub(crate) fn random_rational_in<R: Rng + ?Sized>(
    rng: &mut R,
    lo: &Rational,
    hi: &Rational,
) -> Rational {
    let den: i64 = rng.gen_range(1..=8);
    let d = Rational::from_integer(den.into());
    let lo_n = (lo * &d).ceil().to_integer();
    let hi_n = (hi * &d).floor().to_integer();
    let lo_i: i64 = lo_n.try_into().unwrap_or(0);
    let hi_i: i64 = hi_n.try_into().unwrap_or(0);
    if lo_i > hi_i {
        return lo.clone();
    }
    let num: i64 = rng.gen_range(lo_i..=hi_i);
    Rational::new(num.into(), den.into())
}

#[derive(Serialize, Deserialize)]
struct PolynomialRepr {
    arity: usize,
    terms: Vec<(Vec<u32>, String)>,
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolynomialRepr {
            arity: self.arity,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), c.to_string()))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PolynomialRepr::deserialize(d)?;
        let mut terms = Vec::with_capacity(repr.terms.len());
        for (e, c) in repr.terms {
            let c: Rational = c.parse().map_err(serde::de::Error::custom)?;
            if e.len() != repr.arity {
                return Err(serde::de::Error::custom("monomial arity mismatch"));
            }
            terms.push((e, c));
        }
        Ok(Polynomial {
            arity: repr.arity,
            terms,
        })
    }
}

impl Default for Polynomial {
    fn default() -> Self {
        Polynomial::univariate(&[Rational::one()])
    }
}
