use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{Signed, Zero};
use thiserror::Error;

use super::{expand, int, parse, Expr, Node, ParseError, Rational, Symbol};

/// Anonymous function `(params) ↦ body` used to replace an opaque symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lambda {
    pub params: Vec<Symbol>,
    pub body: Expr,
}

impl Lambda {
    pub fn new(params: &[&str], body: Expr) -> Self {
        Lambda {
            params: params.iter().map(|p| Symbol::from(*p)).collect(),
            body,
        }
    }

    /// The body differentiated (or integrated, for negative entries) per slot.
    fn derivative(&self, name: &str, orders: &[i32]) -> Result<Expr, SubstError> {
        let mut body = self.body.clone();
        for (param, &order) in self.params.iter().zip(orders) {
            for _ in 0..order.max(0) {
                body = body.diff(param);
            }
            for _ in 0..(-order).max(0) {
                body = integrate_polynomial(&body, param).ok_or_else(|| {
                    SubstError::NotIntegrable {
                        name: name.to_string(),
                        param: param.to_string(),
                    }
                })?;
            }
        }
        Ok(body)
    }
}

impl std::str::FromStr for Lambda {
    type Err = ParseError;

    /// Parses `(x, y) -> body`.
    fn from_str(s: &str) -> Result<Self, ParseError> {
        let syntax = |pos: usize, message: &str| ParseError::Syntax {
            pos,
            message: message.into(),
        };
        let arrow = s
            .find("->")
            .ok_or_else(|| syntax(0, "expected `(params) -> body`"))?;
        let head = s[..arrow].trim();
        let inner = head
            .strip_prefix('(')
            .and_then(|h| h.strip_suffix(')'))
            .ok_or_else(|| syntax(0, "parameters must be parenthesized"))?;
        let mut params = Vec::new();
        for p in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let ok = p
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok {
                return Err(syntax(0, &format!("invalid parameter `{p}`")));
            }
            params.push(Symbol::from(p));
        }
        let body = parse(&s[arrow + 2..]).map_err(|e| match e {
            ParseError::Syntax { pos, message } => ParseError::Syntax {
                pos: pos + arrow + 2,
                message,
            },
            ParseError::UnknownSymbol { name, pos } => ParseError::UnknownSymbol {
                name,
                pos: pos + arrow + 2,
            },
        })?;
        Ok(Lambda { params, body })
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<&str> = self.params.iter().map(|p| &**p).collect();
        write!(f, "({}) -> {}", params.join(", "), self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubstError {
    #[error(
        "replacement for `{name}` has {expected} parameters but is applied to {found} arguments"
    )]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error(
        "cannot form the antiderivative of `{name}` in `{param}`: body is not polynomial in it"
    )]
    NotIntegrable { name: String, param: String },
}

/// Simultaneous substitution of variables and opaque function symbols.
#[derive(Debug, Clone, Default)]
pub struct Substitution {
    pub vars: BTreeMap<Symbol, Expr>,
    pub funcs: BTreeMap<Symbol, Lambda>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_var(&mut self, name: &str, value: Expr) -> &mut Self {
        self.vars.insert(Symbol::from(name), value);
        self
    }

    pub fn insert_func(&mut self, name: &str, lambda: Lambda) -> &mut Self {
        self.funcs.insert(Symbol::from(name), lambda);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty() && self.funcs.is_empty()
    }

    /// Apply the substitution. Replacement expressions are not themselves
    /// rewritten, so `{x → y, y → x}` swaps.
    pub fn apply(&self, e: &Expr) -> Result<Expr, SubstError> {
        let mut memo = HashMap::new();
        self.run(e, &mut memo)
    }

    fn run(&self, e: &Expr, memo: &mut HashMap<usize, Expr>) -> Result<Expr, SubstError> {
        if let Some(r) = memo.get(&e.id()) {
            return Ok(r.clone());
        }
        let out = match e.node() {
            Node::Num(_) => e.clone(),
            Node::Var(v) => self.vars.get(v).cloned().unwrap_or_else(|| e.clone()),
            Node::Func(app) => {
                let args = app
                    .args
                    .iter()
                    .map(|a| self.run(a, memo))
                    .collect::<Result<Vec<_>, _>>()?;
                match self.funcs.get(&app.name) {
                    None => {
                        if args.iter().zip(&app.args).all(|(a, b)| a.ptr_eq(b)) {
                            e.clone()
                        } else {
                            Expr::func_deriv(app.name.clone(), app.orders.clone(), args)
                        }
                    }
                    Some(lambda) => {
                        if lambda.params.len() != args.len() {
                            return Err(SubstError::Arity {
                                name: app.name.to_string(),
                                expected: lambda.params.len(),
                                found: args.len(),
                            });
                        }
                        let body = lambda.derivative(&app.name, &app.orders)?;
                        let mut inner = Substitution::new();
                        for (p, a) in lambda.params.iter().zip(args) {
                            inner.vars.insert(p.clone(), a);
                        }
                        inner.apply(&body)?
                    }
                }
            }
            Node::Add(xs) => Expr::sum(
                xs.iter()
                    .map(|x| self.run(x, memo))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Node::Mul(xs) => Expr::product(
                xs.iter()
                    .map(|x| self.run(x, memo))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Node::Pow(b, r) => Expr::pow(self.run(b, memo)?, r.clone()),
            Node::Exp(a) => Expr::exp(self.run(a, memo)?),
        };
        memo.insert(e.id(), out.clone());
        Ok(out)
    }
}

/// Antiderivative in `var` with zero constant at `var = 0`, available when
/// the expansion of `e` is polynomial in `var` with `var`-free coefficients.
pub fn integrate_polynomial(e: &Expr, var: &str) -> Option<Expr> {
    if !e.depends_on(var) {
        return Some(e * Expr::var(var));
    }
    let expanded = expand(e)?;
    let terms: Vec<Expr> = match expanded.node() {
        Node::Add(ts) => ts.clone(),
        _ => vec![expanded.clone()],
    };
    let mut out = Vec::with_capacity(terms.len());
    for t in terms {
        let factors: Vec<Expr> = match t.node() {
            Node::Mul(fs) => fs.clone(),
            _ => vec![t.clone()],
        };
        let mut degree = Rational::zero();
        let mut rest = Vec::new();
        for f in factors {
            match f.node() {
                Node::Var(v) if &**v == var => degree += int(1),
                Node::Pow(b, r) if b.as_var() == Some(var) => {
                    if !r.is_integer() || r.is_negative() {
                        return None;
                    }
                    degree += r;
                }
                _ => {
                    if f.depends_on(var) {
                        return None;
                    }
                    rest.push(f);
                }
            }
        }
        let next = degree + int(1);
        rest.push(Expr::pow(Expr::var(var), next.clone()));
        rest.push(Expr::num(next.recip()));
        out.push(Expr::product(rest));
    }
    Some(Expr::sum(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{is_zero, parse, ZeroConfig};

    fn same(a: &Expr, b: &Expr) -> bool {
        is_zero(&(a - b), &ZeroConfig::default()).unwrap().is_zero()
    }

    #[test]
    fn gauge_substitution_cancels() {
        let e = parse("p1 + V1(x1)*pu").unwrap();
        let mut s = Substitution::new();
        s.insert_var("p1", parse("P1 - V1(x1)*pu").unwrap());
        assert!(same(&s.apply(&e).unwrap(), &Expr::var("P1")));
    }

    #[test]
    fn identity_map_is_structural_identity() {
        let e = parse("p1^2/2 + V1(x1)*exp(p1)").unwrap();
        let mut s = Substitution::new();
        s.insert_var("p1", Expr::var("p1"));
        assert_eq!(s.apply(&e).unwrap(), e);
        assert_eq!(Substitution::new().apply(&e).unwrap(), e);
    }

    #[test]
    fn opaque_replacement_respects_derivative_index() {
        let e = parse("V1'(x1)").unwrap();
        let mut s = Substitution::new();
        s.insert_func("V1", Lambda::new(&["x"], parse("x^2").unwrap()));
        assert!(same(&s.apply(&e).unwrap(), &parse("2*x1").unwrap()));
    }

    #[test]
    fn antiderivative_replacement_integrates() {
        let e = parse("W1[-1](x1)").unwrap();
        let mut s = Substitution::new();
        s.insert_func("W1", Lambda::new(&["x"], parse("3*x^2 + a").unwrap()));
        assert!(same(&s.apply(&e).unwrap(), &parse("x1^3 + a*x1").unwrap()));
        s.insert_func("W1", Lambda::new(&["x"], parse("1/x").unwrap()));
        assert!(matches!(s.apply(&e), Err(SubstError::NotIntegrable { .. })));
    }

    #[test]
    fn substitution_is_simultaneous() {
        let e = parse("x - 2*y").unwrap();
        let mut s = Substitution::new();
        s.insert_var("x", Expr::var("y"))
            .insert_var("y", Expr::var("x"));
        assert!(same(&s.apply(&e).unwrap(), &parse("y - 2*x").unwrap()));
    }

    #[test]
    fn lambda_round_trip() {
        let l: Lambda = "(r, pr) -> sigma1(r) + sigma2(r)*pr".parse().unwrap();
        assert_eq!(l.params.len(), 2);
        let again: Lambda = l.to_string().parse().unwrap();
        assert_eq!(again, l);
        assert!("x -> x".parse::<Lambda>().is_err());
        assert!(
            matches!("(x) -> x +".parse::<Lambda>(), Err(ParseError::Syntax { pos, .. }) if pos >= 6)
        );
    }
}
