//! Canonical expansion into Laurent polynomials over opaque atoms.
//!
//! Variables, opaque applications and non-monomial bases of negative or
//! fractional powers are treated as atoms; products of `exp` factors are
//! merged into a single `exp` of a canonical sum. Two expressions with the
//! same expansion are equal; the converse does not hold (no factoring, no
//! common denominators across distinct bases).

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use num_traits::{One, Signed, Zero};

use super::{Expr, Node, Rational};

const TERM_LIMIT: usize = 4096;

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
struct Poly(BTreeMap<Mono, Rational>);

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
struct Mono {
    factors: BTreeMap<Expr, Rational>,
    exp: Poly,
}

impl Poly {
    fn constant(c: Rational) -> Poly {
        let mut m = BTreeMap::new();
        if !c.is_zero() {
            m.insert(Mono::default(), c);
        }
        Poly(m)
    }

    fn atom(a: Expr, e: Rational) -> Poly {
        let mut factors = BTreeMap::new();
        factors.insert(a, e);
        Poly::mono(Mono {
            factors,
            exp: Poly::default(),
        })
    }

    fn mono(m: Mono) -> Poly {
        Poly(BTreeMap::from([(m, Rational::one())]))
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    fn add_term(&mut self, m: Mono, c: Rational) {
        use std::collections::btree_map::Entry;
        match self.0.entry(m) {
            Entry::Vacant(v) => {
                if !c.is_zero() {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn add(&self, other: &Poly) -> Option<Poly> {
        let mut out = self.clone();
        for (m, c) in &other.0 {
            out.add_term(m.clone(), c.clone());
        }
        (out.len() <= TERM_LIMIT).then_some(out)
    }

    fn scale(&self, k: &Rational) -> Poly {
        if k.is_zero() {
            return Poly::default();
        }
        Poly(self.0.iter().map(|(m, c)| (m.clone(), c * k)).collect())
    }

    fn mul(&self, other: &Poly) -> Option<Poly> {
        if self.len().saturating_mul(other.len()) > TERM_LIMIT * 16 {
            return None;
        }
        let mut out = Poly::default();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &other.0 {
                out.add_term(m1.mul(m2)?, c1 * c2);
            }
        }
        (out.len() <= TERM_LIMIT).then_some(out)
    }

    fn powi(&self, n: u32) -> Option<Poly> {
        let mut acc = Poly::constant(Rational::one());
        for _ in 0..n {
            acc = acc.mul(self)?;
        }
        Some(acc)
    }

    fn single(&self) -> Option<(&Mono, &Rational)> {
        if self.len() == 1 {
            self.0.iter().next()
        } else {
            None
        }
    }

    fn as_constant(&self) -> Option<Rational> {
        match self.len() {
            0 => Some(Rational::zero()),
            1 => self.0.get(&Mono::default()).cloned(),
            _ => None,
        }
    }

    fn to_expr(&self) -> Expr {
        let mut terms: Vec<Expr> = self
            .0
            .iter()
            .filter(|(m, _)| !m.is_unit())
            .map(|(m, c)| {
                let mut factors = vec![Expr::num(c.clone())];
                factors.extend(
                    m.factors
                        .iter()
                        .map(|(a, e)| Expr::pow(a.clone(), e.clone())),
                );
                if !m.exp.0.is_empty() {
                    factors.push(Expr::exp(m.exp.to_expr()));
                }
                Expr::product(factors)
            })
            .collect();
        if let Some(c) = self.0.get(&Mono::default()) {
            terms.push(Expr::num(c.clone()));
        }
        Expr::sum(terms)
    }
}

impl Mono {
    fn is_unit(&self) -> bool {
        self.factors.is_empty() && self.exp.0.is_empty()
    }

    fn mul(&self, other: &Mono) -> Option<Mono> {
        let mut factors = self.factors.clone();
        for (a, e) in &other.factors {
            let slot = factors.entry(a.clone()).or_insert_with(Rational::zero);
            *slot += e;
            if slot.is_zero() {
                factors.remove(a);
            }
        }
        let exp = if other.exp.0.is_empty() {
            self.exp.clone()
        } else {
            self.exp.add(&other.exp)?
        };
        Some(Mono { factors, exp })
    }

    fn pow(&self, r: &Rational) -> Mono {
        Mono {
            factors: self
                .factors
                .iter()
                .map(|(a, e)| (a.clone(), e * r))
                .collect(),
            exp: self.exp.scale(r),
        }
    }
}

struct Expander {
    memo: HashMap<usize, Option<Rc<Poly>>>,
    work: usize,
    budget: usize,
}

impl Expander {
    fn new() -> Self {
        Expander::with_budget(usize::MAX)
    }

    fn with_budget(budget: usize) -> Self {
        Expander {
            memo: HashMap::new(),
            work: 0,
            budget,
        }
    }

    /// Account for a product of `a` by `b` terms; `None` once over budget.
    fn charge(&mut self, a: usize, b: usize) -> Option<()> {
        self.work = self.work.saturating_add(a.saturating_mul(b));
        (self.work <= self.budget).then_some(())
    }

    fn run(&mut self, e: &Expr) -> Option<Rc<Poly>> {
        if let Some(p) = self.memo.get(&e.id()) {
            return p.clone();
        }
        let p = self.step(e).map(Rc::new);
        self.memo.insert(e.id(), p.clone());
        p
    }

    fn canonical(&mut self, e: &Expr) -> Expr {
        match self.run(e) {
            Some(p) => p.to_expr(),
            None => e.clone(),
        }
    }

    fn step(&mut self, e: &Expr) -> Option<Poly> {
        match e.node() {
            Node::Num(r) => Some(Poly::constant(r.clone())),
            Node::Var(_) => Some(Poly::atom(e.clone(), Rational::one())),
            Node::Func(app) => {
                let args = app.args.iter().map(|a| self.canonical(a)).collect();
                let atom = Expr::func_deriv(app.name.clone(), app.orders.clone(), args);
                Some(Poly::atom(atom, Rational::one()))
            }
            Node::Add(terms) => {
                let mut acc = Poly::default();
                for t in terms {
                    acc = acc.add(&*self.run(t)?)?;
                }
                Some(acc)
            }
            Node::Mul(factors) => {
                let mut acc = Poly::constant(Rational::one());
                for f in factors {
                    let p = self.run(f)?;
                    self.charge(acc.len(), p.len())?;
                    acc = acc.mul(&p)?;
                    if acc.len() == 0 {
                        break;
                    }
                }
                Some(acc)
            }
            Node::Exp(arg) => {
                let a = self.run(arg)?;
                if a.len() == 0 {
                    return Some(Poly::constant(Rational::one()));
                }
                Some(Poly::mono(Mono {
                    factors: BTreeMap::new(),
                    exp: (*a).clone(),
                }))
            }
            Node::Pow(base, r) => {
                let b = self.run(base)?;
                if let Some(c) = b.as_constant() {
                    if c.is_zero() {
                        return Some(Poly::atom(e.clone(), Rational::one()));
                    }
                    if r.is_integer() {
                        let n = r.to_integer().try_into().ok()?;
                        return Some(Poly::constant(super::pow_rational(&c, n)));
                    }
                }
                if r.is_integer() && r.is_positive() {
                    let n: u32 = r.to_integer().try_into().ok()?;
                    self.charge(b.len().saturating_pow(n.min(8)), n as usize)?;
                    return b.powi(n);
                }
                if let Some((m, c)) = b.single() {
                    let plain_atom = m.exp.0.is_empty()
                        && m.factors.len() == 1
                        && m.factors.values().all(|e| e.is_one());
                    if c.is_one() && (r.is_integer() || plain_atom) {
                        return Some(Poly::mono(m.pow(r)));
                    }
                    if r.is_integer() {
                        let n: i32 = r.to_integer().try_into().ok()?;
                        return Some(Poly(BTreeMap::from([(
                            m.pow(r),
                            super::pow_rational(c, n),
                        )])));
                    }
                }
                Some(Poly::atom(b.to_expr(), r.clone()))
            }
        }
    }
}

/// Canonical form of `e`, or `e` itself when expansion exceeds the size cap.
pub fn simplify(e: &Expr) -> Expr {
    expand(e).unwrap_or_else(|| e.clone())
}

/// Fully expanded canonical form; `None` if the expansion is too large.
pub fn expand(e: &Expr) -> Option<Expr> {
    Expander::new().run(e).map(|p| p.to_expr())
}

/// True when the canonical expansion is literally zero.
pub fn structurally_zero(e: &Expr) -> bool {
    matches!(Expander::new().run(e), Some(p) if p.len() == 0)
}

/// Like [`structurally_zero`], but gives up (returning false) once the
/// expansion has multiplied more than `budget` pairs of terms.
pub fn structurally_zero_within(e: &Expr, budget: usize) -> bool {
    matches!(Expander::with_budget(budget).run(e), Some(p) if p.len() == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn zero(s: &str) -> bool {
        structurally_zero(&parse(s).unwrap())
    }

    #[test]
    fn binomial_cancels() {
        assert!(zero("(q+p)^2 - q^2 - 2*q*p - p^2"));
        assert!(!zero("q*p - p"));
    }

    #[test]
    fn shared_denominators_cancel() {
        assert!(zero("a/(x*y) + b/(x*y) - (a + b)/(x*y)"));
        assert!(zero("r^2 * (1/r^2) - 1"));
        assert!(zero("1/(V1(x1) + V2(x2)) * 2 - 2/(V2(x2) + V1(x1))"));
    }

    #[test]
    fn exponentials_merge() {
        assert!(zero("exp(p1)*exp(p2) - exp(p2 + p1)"));
        assert!(zero("exp(p)^2 - exp(2*p)"));
    }

    #[test]
    fn opaque_arguments_are_canonicalized() {
        assert!(zero("V(x + 0*y) - V(x)"));
        assert!(zero("f[1,0](q + q, p) - f[1,0](2*q, p)"));
    }

    #[test]
    fn simplify_is_idempotent() {
        let e = parse("(x + y)^3 / x").unwrap();
        let s = simplify(&e);
        assert_eq!(simplify(&s), s);
    }
}
