//! Numerical flows of concretized Hamiltonian systems.
//!
//! Opaque potentials are replaced by concrete polynomials, the Hamiltonians
//! and their vector fields are compiled to float tapes, and trajectories are
//! produced with classical RK4 or a kick-drift-kick Störmer–Verlet split.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::Chart;
use crate::expr::{simplify, EvalError, Expr, Node, SubstError, Substitution, Symbol, Tape};
use crate::poisson::hamiltonian_vector_field;
use crate::stackel::HamiltonianSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("concretization failed: {0}")]
    Substitution(#[from] SubstError),
    #[error("opaque symbols remain after concretization: {}", .0.join(", "))]
    Unresolved(Vec<String>),
    #[error("free parameters outside the chart: {}", .0.join(", "))]
    FreeParameters(Vec<String>),
    #[error("no Hamiltonian H{index} (system has {count})")]
    BadIndex { index: usize, count: usize },
    #[error("initial condition has {got} components, phase space has {expected}")]
    BadInitialCondition { expected: usize, got: usize },
    #[error("invalid initial condition `{0}`")]
    BadAssignment(String),
    #[error("step must be positive and no longer than the duration (dt = {dt}, T = {t_end})")]
    BadStep { dt: f64, t_end: f64 },
    #[error("singular right-hand side at t = {time} ({subexpr}) at point {point:?}")]
    Singular {
        time: f64,
        point: Vec<f64>,
        subexpr: String,
    },
    #[error("non-finite value at t = {time} at point {point:?}")]
    NonFinite { time: f64, point: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4,
    StormerVerlet,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rk4 => "rk4",
            Method::StormerVerlet => "stormer-verlet",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "verlet" | "stormer-verlet" | "symplectic" => Ok(Method::StormerVerlet),
            _ => Err(format!(
                "unknown method `{s}` (expected rk4 or stormer-verlet)"
            )),
        }
    }
}

/// A compiled list of expressions over the phase variables of a chart.
#[derive(Debug, Clone)]
struct PhaseTape {
    tape: Tape,
    slots: Vec<usize>,
}

impl PhaseTape {
    fn new(chart: &Chart, exprs: &[Expr]) -> Self {
        let tape = Tape::compile(exprs);
        let slots = tape
            .vars()
            .iter()
            .map(|v| chart.index_of(v).expect("variables checked against chart"))
            .collect();
        PhaseTape { tape, slots }
    }

    fn eval(&self, x: &[f64], scratch: &mut Scratch, out: &mut [f64]) -> Result<(), EvalError> {
        scratch.vars.clear();
        scratch.vars.extend(self.slots.iter().map(|&s| x[s]));
        self.tape.eval_plain(&scratch.vars, &mut scratch.slots, out)
    }
}

#[derive(Default)]
struct Scratch {
    vars: Vec<f64>,
    slots: Vec<f64>,
}

/// A Hamiltonian system with every opaque symbol instantiated.
#[derive(Debug, Clone)]
pub struct ConcretizedSystem {
    pub system: HamiltonianSystem,
    pub map: Substitution,
    values: PhaseTape,
    fields: Vec<PhaseTape>,
    separable: Vec<bool>,
}

/// Apply `map` to every Hamiltonian and compile values and vector fields.
pub fn concretize(
    sys: &HamiltonianSystem,
    map: &Substitution,
) -> Result<ConcretizedSystem, DynamicsError> {
    let chart = &sys.chart;
    let hamiltonians = sys
        .hamiltonians
        .iter()
        .map(|h| Ok(simplify(&map.apply(h)?)))
        .collect::<Result<Vec<_>, SubstError>>()?;

    let mut opaque: Vec<String> = hamiltonians
        .iter()
        .flat_map(|h| h.functions())
        .map(|(f, _)| f.to_string())
        .collect();
    opaque.sort();
    opaque.dedup();
    if !opaque.is_empty() {
        return Err(DynamicsError::Unresolved(opaque));
    }
    let mut free: Vec<String> = hamiltonians
        .iter()
        .flat_map(|h| h.free_vars())
        .filter(|v| !chart.contains(v))
        .map(|v| v.to_string())
        .collect();
    free.sort();
    free.dedup();
    if !free.is_empty() {
        return Err(DynamicsError::FreeParameters(free));
    }

    let fields = hamiltonians
        .iter()
        .map(|h| {
            let xh = hamiltonian_vector_field(h, chart);
            let comps: Vec<Expr> = xh.components.iter().map(simplify).collect();
            PhaseTape::new(chart, &comps)
        })
        .collect();
    let separable = hamiltonians
        .iter()
        .map(|h| is_separable(h, chart))
        .collect();
    let system = HamiltonianSystem {
        chart: chart.clone(),
        hamiltonians,
        provenance: sys.provenance.clone(),
    };
    Ok(ConcretizedSystem {
        values: PhaseTape::new(chart, &system.hamiltonians),
        system,
        map: map.clone(),
        fields,
        separable,
    })
}

/// Whether `h` splits structurally as `T(p) + V(q)`.
pub fn is_separable(h: &Expr, chart: &Chart) -> bool {
    let h = simplify(h);
    let terms: Vec<Expr> = match h.node() {
        Node::Add(ts) => ts.clone(),
        _ => vec![h.clone()],
    };
    terms.iter().all(|t| {
        let vars = t.free_vars();
        let momenta = vars.iter().filter(|v| chart.is_momentum(v)).count();
        momenta == 0 || momenta == vars.len()
    })
}

impl ConcretizedSystem {
    pub fn chart(&self) -> &Chart {
        &self.system.chart
    }

    pub fn len(&self) -> usize {
        self.system.hamiltonians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.hamiltonians.is_empty()
    }

    pub fn is_separable(&self, which: usize) -> bool {
        self.separable[which]
    }

    /// Values of every `H_j` at `x`.
    pub fn hamiltonians_at(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.len()];
        self.values.eval(x, &mut Scratch::default(), &mut out)?;
        Ok(out)
    }

    /// The vector field of `H_which` at `x`.
    pub fn rhs_at(&self, which: usize, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; x.len()];
        self.fields[which].eval(x, &mut Scratch::default(), &mut out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorMeta {
    pub hamiltonian: usize,
    pub requested: Method,
    pub method: Method,
    pub dt: f64,
    pub duration: f64,
    pub steps: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub chart: Chart,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// `values[step][j]` is `H_j` at `points[step]`.
    pub values: Vec<Vec<f64>>,
    pub meta: IntegratorMeta,
}

struct Stepper<'a> {
    field: &'a PhaseTape,
    scratch: Scratch,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(field: &'a PhaseTape, d: usize) -> Self {
        Stepper {
            field,
            scratch: Scratch::default(),
            k: std::array::from_fn(|_| vec![0.0; d]),
            tmp: vec![0.0; d],
        }
    }

    fn rhs(&mut self, x: &[f64], slot: usize, t: f64) -> Result<(), DynamicsError> {
        self.field
            .eval(x, &mut self.scratch, &mut self.k[slot])
            .map_err(|e| fail(e, t, x))?;
        if self.k[slot].iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite {
                time: t,
                point: x.to_vec(),
            });
        }
        Ok(())
    }

    fn rk4(&mut self, x: &mut [f64], t: f64, dt: f64) -> Result<(), DynamicsError> {
        let d = x.len();
        self.rhs(x, 0, t)?;
        for (stage, c) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..d {
                self.tmp[i] = x[i] + c * dt * self.k[stage - 1][i];
            }
            let probe = std::mem::take(&mut self.tmp);
            let r = self.rhs(&probe, stage, t + c * dt);
            self.tmp = probe;
            r?;
        }
        for i in 0..d {
            x[i] +=
                dt / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        Ok(())
    }

    /// Kick-drift-kick. For separable `H`, the momentum components of the
    /// field depend on coordinates only and vice versa.
    fn verlet(&mut self, x: &mut [f64], t: f64, dt: f64) -> Result<(), DynamicsError> {
        let n = x.len() / 2;
        self.rhs(x, 0, t)?;
        for i in n..2 * n {
            x[i] += 0.5 * dt * self.k[0][i];
        }
        self.rhs(x, 0, t)?;
        for i in 0..n {
            x[i] += dt * self.k[0][i];
        }
        self.rhs(x, 0, t + dt)?;
        for i in n..2 * n {
            x[i] += 0.5 * dt * self.k[0][i];
        }
        Ok(())
    }
}

fn fail(e: EvalError, time: f64, x: &[f64]) -> DynamicsError {
    match e {
        EvalError::Singular { subexpr } | EvalError::Domain { subexpr } => {
            DynamicsError::Singular {
                time,
                point: x.to_vec(),
                subexpr,
            }
        }
        other => DynamicsError::Singular {
            time,
            point: x.to_vec(),
            subexpr: other.to_string(),
        },
    }
}

/// Integrate the flow of `H_which` from `ic` over `[0, duration]` with
/// `round(duration / dt)` uniform steps.
pub fn integrate(
    cs: &ConcretizedSystem,
    which: usize,
    ic: &[f64],
    duration: f64,
    dt: f64,
    method: Method,
) -> Result<Trajectory, DynamicsError> {
    let d = cs.chart().phase_dim();
    if which >= cs.len() {
        return Err(DynamicsError::BadIndex {
            index: which + 1,
            count: cs.len(),
        });
    }
    if ic.len() != d {
        return Err(DynamicsError::BadInitialCondition {
            expected: d,
            got: ic.len(),
        });
    }
    if !(dt > 0.0 && duration >= dt && dt.is_finite() && duration.is_finite()) {
        return Err(DynamicsError::BadStep {
            dt,
            t_end: duration,
        });
    }
    let steps = (duration / dt).round() as usize;
    let (used, note) = match method {
        Method::StormerVerlet if !cs.separable[which] => (
            Method::Rk4,
            Some(format!(
                "H{} is not separable as T(p) + V(q); used rk4",
                which + 1
            )),
        ),
        m => (m, None),
    };

    let mut stepper = Stepper::new(&cs.fields[which], d);
    let mut value_scratch = Scratch::default();
    let mut x = ic.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let t = step as f64 * dt;
        if step > 0 {
            let t0 = (step - 1) as f64 * dt;
            match used {
                Method::Rk4 => stepper.rk4(&mut x, t0, dt)?,
                Method::StormerVerlet => stepper.verlet(&mut x, t0, dt)?,
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DynamicsError::NonFinite { time: t, point: x });
            }
        }
        let mut h = vec![0.0; cs.len()];
        cs.values
            .eval(&x, &mut value_scratch, &mut h)
            .map_err(|e| fail(e, t, &x))?;
        times.push(t);
        points.push(x.clone());
        values.push(h);
    }
    Ok(Trajectory {
        chart: cs.chart().clone(),
        times,
        points,
        values,
        meta: IntegratorMeta {
            hamiltonian: which + 1,
            requested: method,
            method: used,
            dt,
            duration,
            steps,
            note,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Drift {
    /// 1-based Hamiltonian index.
    pub index: usize,
    pub initial: f64,
    pub absolute: f64,
    /// `absolute / |H_j(0)|`; equal to `absolute` when `H_j(0)` is zero.
    pub relative: f64,
}

/// Largest deviation of every `H_j` from its initial value.
pub fn conservation_report(tr: &Trajectory) -> Vec<Drift> {
    let Some(first) = tr.values.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(j, &h0)| {
            let absolute = tr
                .values
                .iter()
                .map(|v| (v[j] - h0).abs())
                .fold(0.0, f64::max);
            let relative = if h0 == 0.0 {
                absolute
            } else {
                absolute / h0.abs()
            };
            Drift {
                index: j + 1,
                initial: h0,
                absolute,
                relative,
            }
        })
        .collect()
}

impl Trajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.points
            .last()
            .expect("trajectories hold at least the initial point")
    }

    /// CSV with one row per step. The time column is `t`, or `time` when the
    /// chart itself has a coordinate called `t`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let time = if self.chart.contains("t") {
            "time"
        } else {
            "t"
        };
        let mut header: Vec<String> = vec![time.to_string()];
        header.extend(self.chart.phase_vars().iter().map(|v| v.to_string()));
        let m = self.values.first().map_or(0, Vec::len);
        header.extend((1..=m).map(|j| format!("H{j}")));
        writeln!(w, "{}", header.join(","))?;
        for ((t, x), h) in self.times.iter().zip(&self.points).zip(&self.values) {
            let row: Vec<String> = std::iter::once(t)
                .chain(x)
                .chain(h)
                .map(|v| v.to_string())
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Parse `"x1=0.1, p1=-2"` style assignments onto a phase point, starting
/// from `base` (zeros if absent). Unknown names are rejected.
pub fn assign_point(
    chart: &Chart,
    base: Option<&[f64]>,
    text: &str,
) -> Result<Vec<f64>, DynamicsError> {
    let mut x = base.map_or_else(|| vec![0.0; chart.phase_dim()], <[f64]>::to_vec);
    let names: BTreeMap<Symbol, usize> = chart
        .phase_vars()
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    for part in text
        .split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| DynamicsError::BadAssignment(part.to_string()))?;
        let idx = names
            .get(name.trim())
            .ok_or_else(|| DynamicsError::BadAssignment(part.to_string()))?;
        x[*idx] = value
            .trim()
            .parse()
            .map_err(|_| DynamicsError::BadAssignment(part.to_string()))?;
    }
    Ok(x)
}
