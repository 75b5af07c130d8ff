//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! sum      := product (('+' | '-') product)*
//! product  := unary (('*' | '/') unary)*
//! unary    := ('-' | '+') unary | power
//! power    := atom ('^' exponent)?
//! exponent := '-'? number | '(' sum ')'        (must fold to a rational)
//! atom     := number | '(' sum ')' | 'exp' '(' sum ')'
//!           | ident | ident derivs? '(' sum (',' sum)* ')'
//! derivs   := '[' int (',' int)* ']' | "'"+
//! ```

use std::collections::BTreeSet;

use num_bigint::BigInt;
use thiserror::Error;

use super::{Expr, Rational, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown symbol `{name}` at position {pos}")]
    UnknownSymbol { name: String, pos: usize },
}

/// Parse an expression; any identifier not followed by `(` is a variable.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    Parser::new(text, None).run()
}

/// Parse an expression whose variables must all belong to `vars`.
pub fn parse_with_vars(text: &str, vars: &BTreeSet<Symbol>) -> Result<Expr, ParseError> {
    Parser::new(text, Some(vars)).run()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: Option<&'a BTreeSet<Symbol>>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, vars: Option<&'a BTreeSet<Symbol>>) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            vars,
        }
    }

    fn run(mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        if self.at_end() {
            return Err(self.error("empty expression"));
        }
        let e = self.sum()?;
        self.skip_ws();
        if !self.at_end() {
            return Err(self.error(format!("unexpected `{}`", self.peek().unwrap() as char)));
        }
        Ok(e)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            pos: self.pos,
            message: message.into(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{}`", c as char)))
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.product()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.product()?);
            } else if self.eat(b'-') {
                terms.push(-self.product()?);
            } else {
                break;
            }
        }
        Ok(Expr::sum(terms))
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                acc = acc * self.unary()?;
            } else if self.eat(b'/') {
                acc = acc / self.unary()?;
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            return Ok(-self.unary()?);
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let start = self.pos;
        let exponent = if self.eat(b'-') {
            -self.atom()?
        } else {
            self.atom()?
        };
        match exponent.as_num() {
            Some(r) => Ok(Expr::pow(base, r.clone())),
            None => {
                self.pos = start;
                Err(self.error("exponent must be a rational constant"))
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier_atom(),
            Some(c) => Err(self.error(format!("unexpected `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        let int_part = &self.src[start..self.pos];
        let mut frac_part: &[u8] = &[];
        if self.peek() == Some(b'.') {
            self.pos += 1;
            let fs = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            frac_part = &self.src[fs..self.pos];
        }
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(self.error("malformed number"));
        }
        let digits: String = int_part
            .iter()
            .chain(frac_part)
            .map(|&c| c as char)
            .collect();
        let numer: BigInt = digits.parse().map_err(|_| self.error("malformed number"))?;
        let denom = num_traits::pow(BigInt::from(10), frac_part.len());
        Ok(Expr::num(Rational::new(numer, denom)))
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn identifier_atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let name = self.ident();
        // Derivative annotations bind tightly to the identifier.
        let mut orders: Option<Vec<i32>> = None;
        if self.peek() == Some(b'[') {
            self.pos += 1;
            let mut v = Vec::new();
            loop {
                self.skip_ws();
                let neg = self.eat(b'-');
                self.skip_ws();
                let ds = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
                if ds == self.pos {
                    return Err(self.error("expected derivative order"));
                }
                let n: i32 = std::str::from_utf8(&self.src[ds..self.pos])
                    .unwrap()
                    .parse()
                    .map_err(|_| self.error("derivative order out of range"))?;
                v.push(if neg { -n } else { n });
                if self.eat(b']') {
                    break;
                }
                self.expect(b',')?;
            }
            orders = Some(v);
        } else if self.peek() == Some(b'\'') {
            let mut n = 0;
            while self.peek() == Some(b'\'') {
                self.pos += 1;
                n += 1;
            }
            orders = Some(vec![n]);
        }
        self.skip_ws();
        if self.peek() != Some(b'(') {
            if orders.is_some() {
                return Err(self.error("derivative annotation requires an argument list"));
            }
            if let Some(vars) = self.vars {
                if !vars.contains(name.as_str()) {
                    return Err(ParseError::UnknownSymbol { name, pos: start });
                }
            }
            return Ok(Expr::var(&name));
        }
        self.pos += 1;
        let mut args = vec![self.sum()?];
        while self.eat(b',') {
            args.push(self.sum()?);
        }
        self.expect(b')')?;
        if name == "exp" {
            if args.len() != 1 || orders.is_some() {
                return Err(ParseError::Syntax {
                    pos: start,
                    message: "exp takes exactly one argument".into(),
                });
            }
            return Ok(Expr::exp(args.pop().unwrap()));
        }
        let orders = orders.unwrap_or_else(|| vec![0; args.len()]);
        if orders.len() != args.len() {
            return Err(ParseError::Syntax {
                pos: start,
                message: format!(
                    "`{name}` has {} derivative orders but {} arguments",
                    orders.len(),
                    args.len()
                ),
            });
        }
        Ok(Expr::func_deriv(Symbol::from(name.as_str()), orders, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Node;

    #[test]
    fn parses_opaque_application() {
        let e = parse("p1^2/2 + V1(x1)").unwrap();
        let funcs = e.functions();
        assert_eq!(funcs.len(), 1);
        let (name, arity) = funcs.into_iter().next().unwrap();
        assert_eq!((&*name, arity), ("V1", 1));
    }

    #[test]
    fn zero_literal() {
        assert!(parse("0").unwrap().is_literal_zero());
    }

    #[test]
    fn transcendental_entry_is_a_product() {
        let e = parse("exp(p1)*V1(x1)").unwrap();
        match e.node() {
            Node::Mul(f) => {
                assert_eq!(f.len(), 2);
                assert!(matches!(f[0].node(), Node::Exp(_)));
                assert!(matches!(f[1].node(), Node::Func(_)));
            }
            other => panic!("expected product, got {other:?}"),
        }
    }

    #[test]
    fn rational_literals_and_decimals() {
        assert_eq!(parse("3/2").unwrap(), Expr::ratio(3, 2));
        assert_eq!(parse("0.25").unwrap(), Expr::ratio(1, 4));
        assert_eq!(parse("2^-1").unwrap(), Expr::ratio(1, 2));
    }

    #[test]
    fn derivative_annotations() {
        let a = parse("V1'(x1)").unwrap();
        let b = parse("V1[1](x1)").unwrap();
        assert_eq!(a, b);
        let c = parse("f3[0,2](q3, p3)").unwrap();
        match c.node() {
            Node::Func(f) => assert_eq!(f.orders, vec![0, 2]),
            _ => panic!(),
        }
        assert!(parse("V1[-1](x1)").is_ok());
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse("p1 + * q1") {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("{other:?}"),
        }
        assert!(parse("x^y").is_err());
        assert!(parse("(x").is_err());
        assert!(parse("").is_err());
        assert!(parse("f[1](x, y)").is_err());
    }

    #[test]
    fn unknown_symbols_are_rejected() {
        let vars: BTreeSet<Symbol> = ["q", "p"].into_iter().map(Symbol::from).collect();
        assert!(parse_with_vars("q*p + V(q)", &vars).is_ok());
        assert!(matches!(
            parse_with_vars("q*w", &vars),
            Err(ParseError::UnknownSymbol { ref name, .. }) if name == "w"
        ));
    }
}
