//! Randomized identity testing.
//!
//! An expression is declared zero when the canonical expansion vanishes or
//! when it evaluates to (numerically) zero at many random points, with every
//! opaque function replaced by an independent random polynomial per trial.

use std::collections::BTreeSet;

use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::eval::Tape;
use super::poly::{random_rational, random_rational_in};
use super::simplify::structurally_zero_within;
use super::{rat, Binding, EvalError, Expr, Polynomial, Symbol, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroConfig {
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    pub max_redraws: usize,
    pub degree: u32,
}

impl Default for ZeroConfig {
    fn default() -> Self {
        ZeroConfig {
            trials: 100,
            tol: 1e-9,
            seed: 0,
            max_redraws: 20,
            degree: 3,
        }
    }
}

impl ZeroConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        ZeroConfig { seed, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ZeroVerdict {
    ProvenZero,
    LikelyZero { trials: usize, max_residual: f64 },
    NonZero { witness: Binding, residual: f64 },
}

impl ZeroVerdict {
    pub fn is_zero(&self) -> bool {
        !matches!(self, ZeroVerdict::NonZero { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ZeroError {
    #[error("every sample was singular ({attempts} attempts); last: {last}")]
    Inconclusive { attempts: usize, last: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Term products the expansion fast path may spend before sampling takes over.
const EXPANSION_BUDGET: usize = 4_000;

fn proven_zero(e: &Expr) -> bool {
    e.is_literal_zero() || structurally_zero_within(e, EXPANSION_BUDGET)
}

/// SplitMix64 step mixing a base seed with a stream index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A random binding for every free variable and opaque symbol of `e`.
pub fn sample_binding<R: Rng + ?Sized>(e: &Expr, degree: u32, rng: &mut R) -> Binding {
    let vars: Vec<Symbol> = e.free_vars().into_iter().collect();
    let funcs: Vec<(Symbol, usize)> = e.functions().into_iter().collect();
    sample(&vars, &funcs, &e.denominator_vars(), degree, rng)
}

fn sample<R: Rng + ?Sized>(
    vars: &[Symbol],
    funcs: &[(Symbol, usize)],
    denominators: &BTreeSet<Symbol>,
    degree: u32,
    rng: &mut R,
) -> Binding {
    let mut b = Binding::new();
    let (lo, hi) = (rat(1, 4), rat(4, 1));
    for v in vars {
        let value = if denominators.contains(v) {
            random_rational_in(rng, &lo, &hi)
        } else {
            random_rational(rng, -2, 2)
        };
        b.vars.insert(v.to_string(), Value::Exact(value));
    }
    for (f, arity) in funcs {
        b.funcs
            .insert(f.to_string(), Polynomial::random(*arity, degree, rng));
    }
    b
}

pub fn is_zero(e: &Expr, cfg: &ZeroConfig) -> Result<ZeroVerdict, ZeroError> {
    if proven_zero(e) {
        return Ok(ZeroVerdict::ProvenZero);
    }
    let tape = Tape::compile(std::slice::from_ref(e));
    let vars = tape.vars().to_vec();
    let funcs: Vec<(Symbol, usize)> = e.functions().into_iter().collect();
    let denominators = e.denominator_vars();

    let mut passed = 0;
    let mut max_residual: f64 = 0.0;
    let mut attempts = 0;
    let mut last = String::new();
    for trial in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, trial as u64));
        for _ in 0..=cfg.max_redraws {
            attempts += 1;
            let b = sample(&vars, &funcs, &denominators, cfg.degree, &mut rng);
            match residual(&tape, &b, cfg.tol) {
                Ok(Residual::Zero(r)) => {
                    passed += 1;
                    max_residual = max_residual.max(r);
                    break;
                }
                Ok(Residual::NonZero(r)) => {
                    return Ok(ZeroVerdict::NonZero {
                        witness: b,
                        residual: r,
                    })
                }
                Err(EvalError::Singular { subexpr }) | Err(EvalError::Domain { subexpr }) => {
                    last = subexpr
                }
                Err(other) => return Err(other.into()),
            }
        }
    }
    if passed == 0 {
        return Err(ZeroError::Inconclusive { attempts, last });
    }
    Ok(ZeroVerdict::LikelyZero {
        trials: passed,
        max_residual,
    })
}

/// Test several rational expressions against shared random samples.
///
/// One tape is compiled for the whole batch, so common subexpressions are
/// evaluated once per trial. A singular sample is redrawn for every member.
/// Batches containing non-rational members are tested one at a time.
pub fn is_zero_many(exprs: &[Expr], cfg: &ZeroConfig) -> Result<Vec<ZeroVerdict>, ZeroError> {
    let mut out: Vec<Option<ZeroVerdict>> = exprs
        .iter()
        .map(|e| proven_zero(e).then_some(ZeroVerdict::ProvenZero))
        .collect();
    let open: Vec<usize> = (0..exprs.len()).filter(|&i| out[i].is_none()).collect();
    if open.is_empty() {
        return Ok(out.into_iter().flatten().collect());
    }
    let roots: Vec<Expr> = open.iter().map(|&i| exprs[i].clone()).collect();
    let tape = Tape::compile(&roots);
    if !tape.supports_exact() {
        for (&i, e) in open.iter().zip(&roots) {
            out[i] = Some(is_zero(e, cfg)?);
        }
        return Ok(out.into_iter().flatten().collect());
    }
    let vars = tape.vars().to_vec();
    let mut funcs = BTreeSet::new();
    let mut denominators = BTreeSet::new();
    for e in &roots {
        funcs.extend(e.functions());
        denominators.extend(e.denominator_vars());
    }
    let funcs: Vec<(Symbol, usize)> = funcs.into_iter().collect();

    let mut passed = 0;
    let mut attempts = 0;
    let mut last = String::new();
    for trial in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, trial as u64));
        for _ in 0..=cfg.max_redraws {
            attempts += 1;
            let b = sample(&vars, &funcs, &denominators, cfg.degree, &mut rng);
            match tape.eval_exact(&b) {
                Ok(values) => {
                    passed += 1;
                    for (&i, v) in open.iter().zip(values) {
                        if out[i].is_none() && !v.is_zero() {
                            let residual = v.to_f64().unwrap_or(f64::INFINITY).abs();
                            out[i] = Some(ZeroVerdict::NonZero {
                                witness: b.clone(),
                                residual,
                            });
                        }
                    }
                    break;
                }
                Err(EvalError::Singular { subexpr }) | Err(EvalError::Domain { subexpr }) => {
                    last = subexpr
                }
                Err(other) => return Err(other.into()),
            }
        }
        if open.iter().all(|&i| out[i].is_some()) {
            break;
        }
    }
    if passed == 0 {
        return Err(ZeroError::Inconclusive { attempts, last });
    }
    Ok(out
        .into_iter()
        .map(|v| {
            v.unwrap_or(ZeroVerdict::LikelyZero {
                trials: passed,
                max_residual: 0.0,
            })
        })
        .collect())
}

enum Residual {
    Zero(f64),
    NonZero(f64),
}

fn residual(tape: &Tape, b: &Binding, tol: f64) -> Result<Residual, EvalError> {
    if tape.supports_exact() {
        let v = tape.eval_exact(b)?.pop().unwrap();
        return Ok(if v.is_zero() {
            Residual::Zero(0.0)
        } else {
            Residual::NonZero(v.to_f64().unwrap_or(f64::INFINITY).abs())
        });
    }
    let r = tape.eval_float(b)?;
    let v = r.values[0].abs();
    Ok(if v > tol * (1.0 + r.scale) {
        Residual::NonZero(v)
    } else {
        Residual::Zero(v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, int, parse, Mode};

    #[test]
    fn binomial_is_proven() {
        let e = parse("(q+p)^2 - q^2 - 2*q*p - p^2").unwrap();
        assert_eq!(
            is_zero(&e, &ZeroConfig::default()).unwrap(),
            ZeroVerdict::ProvenZero
        );
    }

    #[test]
    fn nonzero_has_reproducible_witness() {
        let e = parse("q*p - p").unwrap();
        match is_zero(&e, &ZeroConfig::default()).unwrap() {
            ZeroVerdict::NonZero { witness, residual } => {
                let again = evaluate(&e, &witness, Mode::Exact).unwrap().to_f64().abs();
                assert_eq!(again, residual);
                assert!(residual > 1e-9);
            }
            v => panic!("{v:?}"),
        }
        // The witness from the hand analysis.
        let b = Binding::new()
            .with_exact("q", int(2))
            .with_exact("p", int(1));
        assert_eq!(evaluate(&e, &b, Mode::Exact).unwrap().to_f64(), 1.0);
    }

    #[test]
    fn non_polynomial_identity_is_likely() {
        let e = parse("(x^2 - y^2)/(x - y) - x - y").unwrap();
        match is_zero(&e, &ZeroConfig::default()).unwrap() {
            ZeroVerdict::LikelyZero {
                trials,
                max_residual,
            } => {
                assert_eq!(trials, 100);
                assert_eq!(max_residual, 0.0);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn transcendental_identity_uses_float_mode() {
        let e =
            parse("exp(p)*exp(-p)*V(q) - V(q) + (exp(p) - 1)*(exp(p) + 1) - exp(p)^2 + 1").unwrap();
        assert!(is_zero(&e, &ZeroConfig::default()).unwrap().is_zero());
        let e = parse("exp(p) - 1 - p").unwrap();
        assert!(!is_zero(&e, &ZeroConfig::default()).unwrap().is_zero());
    }

    #[test]
    fn identically_singular_is_inconclusive() {
        let e = parse("1/(x - x + 0*y) + y").unwrap();
        assert!(matches!(
            is_zero(&e, &ZeroConfig::default()),
            Err(ZeroError::Inconclusive { .. })
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let e = parse("V(x)*W'(y) - x").unwrap();
        let cfg = ZeroConfig::default().with_seed(42);
        assert_eq!(is_zero(&e, &cfg).unwrap(), is_zero(&e, &cfg).unwrap());
    }
}
