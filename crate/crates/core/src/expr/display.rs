//! Rendering in the textual grammar accepted by [`super::parse`].
//!
//! The output re-parses to a structurally equal tree.

use std::fmt::{self, Write};

use num_traits::Signed;

use super::{int, Expr, FuncApp, Node, Rational};

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_POWER: u8 = 3;
const PREC_ATOM: u8 = 4;

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}

fn precedence(e: &Expr) -> u8 {
    match e.node() {
        Node::Num(r) if r.is_negative() => PREC_SUM,
        Node::Num(r) if !r.is_integer() => PREC_PRODUCT,
        Node::Num(_) | Node::Var(_) | Node::Func(_) | Node::Exp(_) => PREC_ATOM,
        Node::Add(_) => PREC_SUM,
        Node::Mul(_) => PREC_PRODUCT,
        Node::Pow(_, r) if r.is_negative() => PREC_PRODUCT,
        Node::Pow(..) => PREC_POWER,
    }
}

fn write_expr(f: &mut dyn Write, e: &Expr, min_prec: u8) -> fmt::Result {
    let p = precedence(e);
    if p < min_prec {
        f.write_char('(')?;
        write_bare(f, e)?;
        f.write_char(')')
    } else {
        write_bare(f, e)
    }
}

fn write_rational(f: &mut dyn Write, r: &Rational) -> fmt::Result {
    if r.is_integer() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

fn write_bare(f: &mut dyn Write, e: &Expr) -> fmt::Result {
    match e.node() {
        Node::Num(r) => write_rational(f, r),
        Node::Var(v) => f.write_str(v),
        Node::Func(app) => write_func(f, app),
        Node::Exp(a) => {
            f.write_str("exp(")?;
            write_expr(f, a, 0)?;
            f.write_char(')')
        }
        Node::Add(terms) => {
            for (i, t) in terms.iter().enumerate() {
                match negated(t) {
                    Some(pos) => {
                        f.write_str(if i == 0 { "-" } else { " - " })?;
                        write_expr(f, &pos, PREC_PRODUCT)?;
                    }
                    None => {
                        if i > 0 {
                            f.write_str(" + ")?;
                        }
                        write_expr(f, t, PREC_SUM + 1)?;
                    }
                }
            }
            Ok(())
        }
        Node::Mul(factors) => write_product(f, factors),
        Node::Pow(base, r) => {
            if r.is_negative() {
                f.write_str("1/")?;
                write_expr(f, &Expr::pow(base.clone(), -r), PREC_POWER)
            } else {
                write_expr(f, base, PREC_ATOM)?;
                f.write_char('^')?;
                write_exponent(f, r)
            }
        }
    }
}

fn write_exponent(f: &mut dyn Write, r: &Rational) -> fmt::Result {
    if r.is_integer() && r.is_positive() {
        write_rational(f, r)
    } else {
        f.write_char('(')?;
        write_rational(f, r)?;
        f.write_char(')')
    }
}

/// For a term with a negative leading coefficient, return its negation.
fn negated(t: &Expr) -> Option<Expr> {
    match t.node() {
        Node::Num(r) if r.is_negative() => Some(Expr::num(-r)),
        Node::Mul(factors) => match factors[0].node() {
            Node::Num(r) if r.is_negative() => {
                let mut rest = factors.clone();
                rest[0] = Expr::num(-r);
                Some(Expr::product(rest))
            }
            _ => None,
        },
        _ => None,
    }
}

fn write_product(f: &mut dyn Write, factors: &[Expr]) -> fmt::Result {
    let mut rest = factors;
    let mut started = false;
    if let Node::Num(r) = factors[0].node() {
        if r == &int(-1) {
            f.write_char('-')?;
        } else {
            if r.is_negative() {
                f.write_char('-')?;
            }
            write_rational(f, &r.abs())?;
            started = true;
        }
        rest = &factors[1..];
    }
    for factor in rest {
        match factor.node() {
            Node::Pow(base, r) if r.is_negative() => {
                if !started {
                    f.write_char('1')?;
                }
                f.write_char('/')?;
                write_expr(f, &Expr::pow(base.clone(), -r), PREC_POWER)?;
            }
            _ => {
                if started {
                    f.write_char('*')?;
                }
                write_expr(f, factor, PREC_POWER)?;
            }
        }
        started = true;
    }
    Ok(())
}

fn write_func(f: &mut dyn Write, app: &FuncApp) -> fmt::Result {
    f.write_str(&app.name)?;
    if !app.is_plain() {
        f.write_char('[')?;
        for (i, o) in app.orders.iter().enumerate() {
            if i > 0 {
                f.write_char(',')?;
            }
            write!(f, "{o}")?;
        }
        f.write_char(']')?;
    }
    f.write_char('(')?;
    for (i, a) in app.args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write_expr(f, a, 0)?;
    }
    f.write_char(')')
}
