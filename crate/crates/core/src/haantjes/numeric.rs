//! Finite-difference oracle for the torsions.
//!
//! Works only with point values of `K`: vector fields are closures, Lie
//! brackets use central-difference Jacobians, and the torsions are assembled
//! straight from their definitions on pairs of frame fields, with no use of
//! tensoriality. Agreement with the symbolic components is therefore an
//! independent check of both the differentiation and the algebra.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{TensorField11, TorsionField};
use crate::expr::{derive_seed, sample_binding, Binding, EvalError, Expr, Tape, Value};

pub const STEP: f64 = 1e-5;

/// Largest disagreement, relative to the local scale, allowed between the
/// step-`h` and step-`2h` estimates before a sample is redrawn.
pub const CONDITIONING_TOL: f64 = 1e-6;

type Field<'a> = Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>;

/// Point evaluator for an operator under fixed stand-ins for its opaque
/// symbols and parameters.
pub struct PointOperator {
    tape: Tape,
    base: Binding,
    phase: Vec<String>,
    dim: usize,
}

impl PointOperator {
    pub fn new(k: &TensorField11, base: Binding) -> Self {
        let entries: Vec<Expr> = k.matrix.entries().map(|(_, e)| e.clone()).collect();
        PointOperator {
            tape: Tape::compile(&entries),
            base,
            phase: k.chart.phase_vars().iter().map(|s| s.to_string()).collect(),
            dim: k.dim(),
        }
    }

    /// Row-major `K^i_j` at the phase point `x`.
    pub fn at(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut b = self.base.clone();
        for (name, v) in self.phase.iter().zip(x) {
            b.vars.insert(name.clone(), Value::Float(*v));
        }
        Ok(self.tape.eval_float(&b)?.values)
    }

    fn apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let k = self
            .at(x)
            .unwrap_or_else(|_| vec![f64::NAN; self.dim * self.dim]);
        matvec(&k, v, self.dim)
    }
}

fn matvec(k: &[f64], v: &[f64], d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| (0..d).map(|j| k[i * d + j] * v[j]).sum())
        .collect()
}

fn jacobian_times(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let mut out = vec![0.0; d];
    let mut xp = x.to_vec();
    for a in 0..d {
        if v[a] == 0.0 {
            continue;
        }
        xp[a] = x[a] + h;
        let fp = f(&xp);
        xp[a] = x[a] - h;
        let fm = f(&xp);
        xp[a] = x[a];
        for k in 0..d {
            out[k] += v[a] * (fp[k] - fm[k]) / (2.0 * h);
        }
    }
    out
}

/// `[X, Y](x) = J_Y X − J_X Y`.
fn bracket(
    x_field: &dyn Fn(&[f64]) -> Vec<f64>,
    y_field: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    let xv = x_field(x);
    let yv = y_field(x);
    let a = jacobian_times(y_field, x, &xv, h);
    let b = jacobian_times(x_field, x, &yv, h);
    a.iter().zip(&b).map(|(p, q)| p - q).collect()
}

fn compose<'a>(k: &'a PointOperator, f: &'a dyn Fn(&[f64]) -> Vec<f64>) -> Field<'a> {
    Box::new(move |x: &[f64]| k.apply(x, &f(x)))
}

/// `τ(X,Y) = [KX,KY] − K[KX,Y] − K[X,KY] + K²[X,Y]` at `x`.
fn nijenhuis_on(
    k: &PointOperator,
    xf: &dyn Fn(&[f64]) -> Vec<f64>,
    yf: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    let kx = compose(k, xf);
    let ky = compose(k, yf);
    let t1 = bracket(&*kx, &*ky, x, h);
    let t2 = bracket(&*kx, yf, x, h);
    let t3 = bracket(xf, &*ky, x, h);
    let t4 = bracket(xf, yf, x, h);
    let mid: Vec<f64> = t2.iter().zip(&t3).map(|(a, b)| a + b).collect();
    let k_mid = k.apply(x, &mid);
    let k2_t4 = k.apply(x, &k.apply(x, &t4));
    (0..x.len()).map(|i| t1[i] - k_mid[i] + k2_t4[i]).collect()
}

fn frame(d: usize, i: usize) -> impl Fn(&[f64]) -> Vec<f64> {
    move |_: &[f64]| {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    }
}

/// `τ(∂_i, ∂_j)` by finite differences, as `[k]` components.
pub fn nijenhuis_at(k: &PointOperator, x: &[f64], i: usize, j: usize, h: f64) -> Vec<f64> {
    let d = x.len();
    nijenhuis_on(k, &frame(d, i), &frame(d, j), x, h)
}

/// `ℋ(∂_i, ∂_j) = K²τ(X,Y) + τ(KX,KY) − K(τ(X,KY) + τ(KX,Y))` by finite differences.
pub fn haantjes_at(k: &PointOperator, x: &[f64], i: usize, j: usize, h: f64) -> Vec<f64> {
    let d = x.len();
    let (xf, yf) = (frame(d, i), frame(d, j));
    let kx = compose(k, &xf);
    let ky = compose(k, &yf);
    let t_xy = nijenhuis_on(k, &xf, &yf, x, h);
    let t_kxky = nijenhuis_on(k, &*kx, &*ky, x, h);
    let t_xky = nijenhuis_on(k, &xf, &*ky, x, h);
    let t_kxy = nijenhuis_on(k, &*kx, &yf, x, h);
    let k2 = k.apply(x, &k.apply(x, &t_xy));
    let mid: Vec<f64> = t_xky.iter().zip(&t_kxy).map(|(a, b)| a + b).collect();
    let k_mid = k.apply(x, &mid);
    (0..d).map(|c| k2[c] + t_kxky[c] - k_mid[c]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TorsionKind {
    Nijenhuis,
    Haantjes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub points: usize,
    pub max_relative_error: f64,
    pub max_magnitude: f64,
    /// Samples redrawn because the difference quotients were unreliable there.
    pub rejected: usize,
}

/// Compare symbolic torsion components with the finite-difference values
/// at `points` random bindings. The error at a point is scaled by
/// `max(1, largest component magnitude)` there. Samples where the step-`h`
/// and step-`2h` estimates disagree beyond [`CONDITIONING_TOL`] (near a pole
/// of `K`, typically) are redrawn and counted in `rejected`.
pub fn compare(
    k: &TensorField11,
    symbolic: &TorsionField,
    kind: TorsionKind,
    points: usize,
    seed: u64,
) -> Result<OracleReport, EvalError> {
    let d = k.dim();
    let upper: Vec<((usize, usize, usize), Expr)> =
        symbolic.upper().map(|(idx, e)| (idx, e.clone())).collect();
    let exprs: Vec<Expr> = upper.iter().map(|(_, e)| e.clone()).collect();
    let tape = Tape::compile(&exprs);
    let probe = Expr::sum(
        k.matrix
            .entries()
            .map(|(_, e)| e.clone())
            .chain(exprs.iter().cloned())
            .collect::<Vec<_>>(),
    );
    let phase: Vec<String> = k.chart.phase_vars().iter().map(|s| s.to_string()).collect();

    let mut worst: f64 = 0.0;
    let mut magnitude: f64 = 0.0;
    let mut done = 0;
    let mut rejected = 0;
    let mut attempt = 0u64;
    while done < points {
        if attempt > 20 * points as u64 + 20 {
            return Err(EvalError::Singular {
                subexpr: "every oracle sample was singular".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt));
        attempt += 1;
        let mut b = sample_binding(&probe, 3, &mut rng);
        for name in &phase {
            b.vars.entry(name.clone()).or_insert(Value::Float(0.5));
        }
        let sym = match tape.eval_float(&b) {
            Ok(r) => r.values,
            Err(EvalError::Singular { .. }) | Err(EvalError::Domain { .. }) => continue,
            Err(e) => return Err(e),
        };
        let x: Vec<f64> = phase.iter().map(|n| b.vars[n].to_f64()).collect();
        let op = PointOperator::new(k, b.clone());
        if op.at(&x).is_err() {
            continue;
        }
        let torsion = |h: f64| {
            let mut out = vec![0.0; d * d * d];
            for i in 0..d {
                for j in i + 1..d {
                    let v = match kind {
                        TorsionKind::Nijenhuis => nijenhuis_at(&op, &x, i, j, h),
                        TorsionKind::Haantjes => haantjes_at(&op, &x, i, j, h),
                    };
                    for (kk, val) in v.into_iter().enumerate() {
                        out[(kk * d + i) * d + j] = val;
                    }
                }
            }
            out
        };
        let numeric = torsion(STEP);
        let coarse = torsion(2.0 * STEP);
        if numeric.iter().chain(&coarse).any(|v| !v.is_finite()) {
            rejected += 1;
            continue;
        }
        let spread = numeric
            .iter()
            .zip(&coarse)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if spread > CONDITIONING_TOL * numeric.iter().fold(1.0f64, |m, v| m.max(v.abs())) {
            rejected += 1;
            continue;
        }
        let scale = sym
            .iter()
            .chain(&numeric)
            .fold(1.0f64, |m, v| m.max(v.abs()));
        for (((kk, i, j), _), s) in upper.iter().zip(&sym) {
            let n = numeric[(kk * d + i) * d + j];
            worst = worst.max((s - n).abs() / scale);
        }
        magnitude = magnitude.max(scale);
        done += 1;
    }
    Ok(OracleReport {
        points,
        max_relative_error: worst,
        max_magnitude: magnitude,
        rejected,
    })
}
