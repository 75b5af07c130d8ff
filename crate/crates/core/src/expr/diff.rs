use std::collections::HashMap;

use num_traits::One;

use super::{Expr, Node};

/// Partial derivative of `e` with respect to the variable `var`.
///
/// Opaque applications `f[o](a1,..,ak)` differentiate by the chain rule,
/// bumping the derivative index of each slot whose argument depends on `var`.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    Differentiator::new(var).run(e)
}

/// Gradient with respect to several variables, sharing nothing between them.
pub fn differentiate_many<S: AsRef<str>>(e: &Expr, vars: &[S]) -> Vec<Expr> {
    vars.iter().map(|v| differentiate(e, v.as_ref())).collect()
}

struct Differentiator<'a> {
    var: &'a str,
    memo: HashMap<usize, Expr>,
}

impl<'a> Differentiator<'a> {
    fn new(var: &'a str) -> Self {
        Differentiator {
            var,
            memo: HashMap::new(),
        }
    }

    fn run(&mut self, e: &Expr) -> Expr {
        if let Some(d) = self.memo.get(&e.id()) {
            return d.clone();
        }
        let d = self.step(e);
        self.memo.insert(e.id(), d.clone());
        d
    }

    fn step(&mut self, e: &Expr) -> Expr {
        match e.node() {
            Node::Num(_) => Expr::zero(),
            Node::Var(v) => {
                if &**v == self.var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Func(app) => {
                let mut terms = Vec::new();
                for (slot, arg) in app.args.iter().enumerate() {
                    let da = self.run(arg);
                    if da.is_literal_zero() {
                        continue;
                    }
                    let mut orders = app.orders.clone();
                    orders[slot] += 1;
                    let bumped = Expr::func_deriv(app.name.clone(), orders, app.args.clone());
                    terms.push(bumped * da);
                }
                Expr::sum(terms)
            }
            Node::Add(terms) => {
                let ds: Vec<Expr> = terms.iter().map(|t| self.run(t)).collect();
                Expr::sum(ds)
            }
            Node::Mul(factors) => {
                let mut terms = Vec::new();
                for (i, f) in factors.iter().enumerate() {
                    let df = self.run(f);
                    if df.is_literal_zero() {
                        continue;
                    }
                    let mut parts = factors.clone();
                    parts[i] = df;
                    terms.push(Expr::product(parts));
                }
                Expr::sum(terms)
            }
            Node::Pow(base, r) => {
                let db = self.run(base);
                if db.is_literal_zero() {
                    return Expr::zero();
                }
                let lowered = Expr::pow(base.clone(), r - super::Rational::one());
                Expr::product([Expr::num(r.clone()), lowered, db])
            }
            Node::Exp(arg) => {
                let da = self.run(arg);
                if da.is_literal_zero() {
                    return Expr::zero();
                }
                Expr::product([e.clone(), da])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{is_zero, parse, ZeroConfig, ZeroVerdict};

    fn assert_same(a: &Expr, b: &str) {
        let diff = a - &parse(b).unwrap();
        let v = is_zero(&diff, &ZeroConfig::default()).unwrap();
        assert!(v.is_zero(), "{a} vs {b}: {v:?}");
    }

    #[test]
    fn polynomial_rule() {
        let e = parse("p1^2/2 + V1(x1)*p1*pu").unwrap();
        assert_same(&e.diff("p1"), "p1 + V1(x1)*pu");
    }

    #[test]
    fn opaque_derivative_bumps_index() {
        let e = parse("V1(x1)*p1").unwrap();
        assert_eq!(e.diff("x1"), parse("V1'(x1)*p1").unwrap());
    }

    #[test]
    fn exp_is_its_own_derivative() {
        let e = parse("V1(x1)*exp(p1)*pu").unwrap();
        assert!(matches!(
            is_zero(&(e.diff("p1") - &e), &ZeroConfig::default()),
            Ok(ZeroVerdict::ProvenZero)
        ));
    }

    #[test]
    fn chain_rule_through_arguments() {
        let e = parse("f(x*y, y)").unwrap();
        assert_same(&e.diff("y"), "f[1,0](x*y, y)*x + f[0,1](x*y, y)");
    }

    #[test]
    fn antiderivative_differentiates_back() {
        let e = parse("W1[-1](x1)").unwrap();
        assert_eq!(e.diff("x1"), parse("W1(x1)").unwrap());
    }

    #[test]
    fn fractional_powers() {
        let e = parse("x^(1/2)").unwrap();
        assert_same(&e.diff("x"), "1/2*x^(-1/2)");
    }
}
