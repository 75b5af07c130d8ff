//! Immutable symbolic expressions over exact rationals.
//!
//! An [`Expr`] is a cheaply clonable handle to a shared, acyclic node tree.
//! Subtrees are shared through `Arc`, so large derived objects (torsion
//! components, Poisson brackets) form DAGs; the evaluators and the
//! differentiator memoize on node identity to exploit that sharing.
//!
//! Construction goes through smart constructors that flatten nested sums and
//! products, fold numeric constants and drop neutral elements. They never
//! expand or reorder; see [`simplify`] for the canonical polynomial form.

mod diff;
mod display;
mod eval;
mod parse;
mod poly;
mod simplify;
mod subst;
mod zero;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub use diff::{differentiate, differentiate_many};
pub use eval::{evaluate, Binding, EvalError, FloatEval, Mode, Tape, Value};
pub use parse::{parse, parse_with_vars, ParseError};
pub use poly::Polynomial;
pub use simplify::{expand, simplify, structurally_zero};
pub use subst::{integrate_polynomial, Lambda, SubstError, Substitution};
pub use zero::{
    derive_seed, is_zero, is_zero_many, sample_binding, ZeroConfig, ZeroError, ZeroVerdict,
};

pub type Rational = BigRational;
pub type Symbol = Arc<str>;

/// Shared handle to an expression node.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Num(Rational),
    Var(Symbol),
    Func(FuncApp),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    /// Power with a rational exponent.
    Pow(Expr, Rational),
    Exp(Expr),
}

/// Application of an opaque function symbol.
///
/// `orders[i]` is the number of times the function has been differentiated
/// with respect to its `i`-th slot. A negative entry denotes an antiderivative
/// (with zero integration constant) in that slot, which is how primitives such
/// as `∫V(x)dx` are represented: `V[-1](x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FuncApp {
    pub name: Symbol,
    pub orders: Vec<i32>,
    pub args: Vec<Expr>,
}

impl FuncApp {
    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_plain(&self) -> bool {
        self.orders.iter().all(|&o| o == 0)
    }
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

impl Expr {
    fn wrap(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    /// Identity of the underlying node, used as a memoization key.
    pub(crate) fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn num(r: Rational) -> Expr {
        Expr::wrap(Node::Num(r))
    }

    pub fn int(n: i64) -> Expr {
        Expr::num(int(n))
    }

    pub fn ratio(n: i64, d: i64) -> Expr {
        Expr::num(rat(n, d))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn var(name: &str) -> Expr {
        Expr::wrap(Node::Var(Symbol::from(name)))
    }

    pub fn var_sym(name: Symbol) -> Expr {
        Expr::wrap(Node::Var(name))
    }

    /// Plain application `name(args)`.
    pub fn func(name: &str, args: Vec<Expr>) -> Expr {
        let orders = vec![0; args.len()];
        Expr::func_deriv(Symbol::from(name), orders, args)
    }

    pub fn func_deriv(name: Symbol, orders: Vec<i32>, args: Vec<Expr>) -> Expr {
        assert_eq!(
            orders.len(),
            args.len(),
            "derivative index must match arity"
        );
        Expr::wrap(Node::Func(FuncApp { name, orders, args }))
    }

    pub fn exp(arg: Expr) -> Expr {
        match arg.as_num() {
            Some(r) if r.is_zero() => Expr::one(),
            _ => Expr::wrap(Node::Exp(arg)),
        }
    }

    pub fn pow(base: Expr, exponent: Rational) -> Expr {
        if exponent.is_zero() {
            return Expr::one();
        }
        if exponent.is_one() {
            return base;
        }
        let integral = exponent.is_integer();
        match base.node() {
            Node::Num(b) if integral => {
                if b.is_zero() && exponent.is_negative() {
                    return Expr::wrap(Node::Pow(base.clone(), exponent));
                }
                let e = exponent
                    .to_integer()
                    .to_i32()
                    .expect("exponent out of range");
                return Expr::num(pow_rational(b, e));
            }
            Node::Num(b) if b.is_one() => return Expr::one(),
            Node::Pow(inner, s) if integral => {
                return Expr::pow(inner.clone(), s * &exponent);
            }
            _ => {}
        }
        Expr::wrap(Node::Pow(base, exponent))
    }

    pub fn powi(base: Expr, e: i64) -> Expr {
        Expr::pow(base, int(e))
    }

    pub fn recip(&self) -> Expr {
        Expr::pow(self.clone(), int(-1))
    }

    /// Flattening sum. Numeric terms are folded into a single trailing constant.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        let mut out = Vec::new();
        let mut constant = Rational::zero();
        let mut push = |t: Expr, out: &mut Vec<Expr>| match t.node() {
            Node::Num(r) => constant += r,
            _ => out.push(t),
        };
        for t in terms {
            match t.node() {
                Node::Add(children) => {
                    for c in children {
                        push(c.clone(), &mut out);
                    }
                }
                _ => push(t, &mut out),
            }
        }
        if !constant.is_zero() {
            out.push(Expr::num(constant));
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().unwrap(),
            _ => Expr::wrap(Node::Add(out)),
        }
    }

    /// Flattening product. Numeric factors are folded into a single leading
    /// constant; a zero constant annihilates the product.
    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        let mut out = Vec::new();
        let mut constant = Rational::one();
        for f in factors {
            let mut push = |f: &Expr| match f.node() {
                Node::Num(r) => constant *= r,
                _ => out.push(f.clone()),
            };
            match f.node() {
                Node::Mul(children) => children.iter().for_each(&mut push),
                _ => push(&f),
            }
        }
        if constant.is_zero() {
            return Expr::zero();
        }
        if !constant.is_one() {
            out.insert(0, Expr::num(constant));
        }
        match out.len() {
            0 => Expr::one(),
            1 => out.pop().unwrap(),
            _ => Expr::wrap(Node::Mul(out)),
        }
    }

    pub fn as_num(&self) -> Option<&Rational> {
        match self.node() {
            Node::Num(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self.node() {
            Node::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_literal_zero(&self) -> bool {
        matches!(self.as_num(), Some(r) if r.is_zero())
    }

    pub fn is_literal_one(&self) -> bool {
        matches!(self.as_num(), Some(r) if r.is_one())
    }

    /// Free variables, including those appearing inside opaque-function arguments.
    pub fn free_vars(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.visit(&mut |n| {
            if let Node::Var(v) = n {
                out.insert(v.clone());
            }
        });
        out
    }

    /// Opaque function symbols together with their arity.
    pub fn functions(&self) -> BTreeSet<(Symbol, usize)> {
        let mut out = BTreeSet::new();
        self.visit(&mut |n| {
            if let Node::Func(f) = n {
                out.insert((f.name.clone(), f.arity()));
            }
        });
        out
    }

    pub fn depends_on(&self, var: &str) -> bool {
        let mut found = false;
        self.visit(&mut |n| {
            if let Node::Var(v) = n {
                if &**v == var {
                    found = true;
                }
            }
        });
        found
    }

    /// True when exact rational evaluation is possible: no `exp` and only
    /// integer exponents.
    pub fn is_rational_function(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |n| match n {
            Node::Exp(_) => ok = false,
            Node::Pow(_, r) if !r.is_integer() => ok = false,
            _ => {}
        });
        ok
    }

    /// Variables occurring inside the base of a negative power. These are the
    /// coordinates that can drive an evaluation into a pole.
    pub fn denominator_vars(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.visit(&mut |n| {
            if let Node::Pow(base, r) = n {
                if r.is_negative() {
                    out.extend(base.free_vars());
                }
            }
        });
        out
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            stack.extend(e.children().cloned());
        }
        seen.len()
    }

    pub fn children(&self) -> Box<dyn Iterator<Item = &Expr> + '_> {
        match self.node() {
            Node::Num(_) | Node::Var(_) => Box::new(std::iter::empty()),
            Node::Func(f) => Box::new(f.args.iter()),
            Node::Add(v) | Node::Mul(v) => Box::new(v.iter()),
            Node::Pow(b, _) => Box::new(std::iter::once(b)),
            Node::Exp(a) => Box::new(std::iter::once(a)),
        }
    }

    /// Visit each distinct node once.
    fn visit(&self, f: &mut dyn FnMut(&Node)) {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            f(e.node());
            stack.extend(e.children());
        }
    }

    pub fn diff(&self, var: &str) -> Expr {
        differentiate(self, var)
    }

    /// Simultaneous substitution of variables.
    pub fn subs_vars(&self, map: &BTreeMap<String, Expr>) -> Expr {
        let mut s = Substitution::new();
        for (k, v) in map {
            s.insert_var(k, v.clone());
        }
        s.apply(self).expect("variable substitution is infallible")
    }
}

pub(crate) fn pow_rational(b: &Rational, e: i32) -> Rational {
    if e >= 0 {
        num_traits::pow(b.clone(), e as usize)
    } else {
        num_traits::pow(b.recip(), e.unsigned_abs() as usize)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            Ordering::Equal
        } else {
            self.0.cmp(&other.0)
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

impl From<Rational> for Expr {
    fn from(r: Rational) -> Self {
        Expr::num(r)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl $trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs.clone())
            }
        }
        impl $trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs)
            }
        }
        impl $trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs.clone())
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum([a, b]));
binop!(Sub, sub, |a, b| Expr::sum([a, -b]));
binop!(Mul, mul, |a, b| Expr::product([a, b]));
binop!(Div, div, |a, b| Expr::product([a, b.recip()]));

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::product([Expr::int(-1), self])
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_fold_constants() {
        let x = Expr::var("x");
        assert_eq!(
            Expr::sum([Expr::int(1), x.clone(), Expr::int(2)]),
            Expr::sum([x.clone(), Expr::int(3)])
        );
        assert!(Expr::product([Expr::int(0), x.clone()]).is_literal_zero());
        assert_eq!(Expr::product([Expr::one(), x.clone()]), x);
        assert_eq!(&x - &Expr::zero(), x);
        assert_eq!(Expr::pow(Expr::int(2), int(-2)), Expr::ratio(1, 4));
        assert_eq!(
            Expr::pow(Expr::pow(x.clone(), int(2)), int(3)),
            Expr::pow(x, int(6))
        );
    }

    #[test]
    fn free_vars_include_function_arguments() {
        let e = Expr::func("V1", vec![Expr::var("x1")]) * Expr::var("p1");
        let vars: Vec<_> = e.free_vars().into_iter().map(|s| s.to_string()).collect();
        assert_eq!(vars, ["p1", "x1"]);
        assert_eq!(e.functions().len(), 1);
    }

    #[test]
    fn denominator_vars_are_detected() {
        let e = Expr::var("a") / (Expr::var("r") * Expr::var("r"));
        let d: Vec<_> = e
            .denominator_vars()
            .into_iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(d, ["r"]);
    }
}
