//! Exact and floating-point evaluation.
//!
//! Expressions are compiled into a [`Tape`]: a topologically ordered list of
//! operations with one slot per distinct DAG node. A tape is built once and
//! evaluated many times, which is how the zero tester and the integrators use
//! it.

use std::collections::{BTreeMap, HashMap};

use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use super::{pow_rational, Expr, Node, Polynomial, Rational, Symbol};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Exact(Rational),
    Float(f64),
}

impl Value {
    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Value::Float(x) => *x,
        }
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            Value::Exact(r) => Some(r),
            Value::Float(_) => None,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Exact(r) => write!(f, "{r}"),
            Value::Float(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Float,
}

/// Values for variables and polynomial stand-ins for opaque symbols.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Binding {
    pub vars: BTreeMap<String, Value>,
    pub funcs: BTreeMap<String, Polynomial>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_var(mut self, name: &str, value: Value) -> Self {
        self.vars.insert(name.to_string(), value);
        self
    }

    pub fn with_exact(self, name: &str, value: Rational) -> Self {
        self.with_var(name, Value::Exact(value))
    }

    pub fn with_func(mut self, name: &str, poly: Polynomial) -> Self {
        self.funcs.insert(name.to_string(), poly);
        self
    }
}

impl std::fmt::Display for Binding {
    /// `x1 = 1/2, p1 = -3; V1(s1) = 2*s1 - 1`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let vars: Vec<String> = self
            .vars
            .iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect();
        write!(f, "{}", vars.join(", "))?;
        let funcs: Vec<String> = self
            .funcs
            .iter()
            .map(|(name, p)| {
                let args: Vec<Expr> = (1..=p.arity())
                    .map(|i| Expr::var(&format!("s{i}")))
                    .collect();
                let shown: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                format!("{name}({}) = {}", shown.join(", "), p.to_expr(&args))
            })
            .collect();
        if !funcs.is_empty() {
            write!(f, "; {}", funcs.join("; "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unbound function `{0}`")]
    UnboundFunction(String),
    #[error("function `{name}` bound with arity {bound} but applied to {applied} arguments")]
    ArityMismatch {
        name: String,
        bound: usize,
        applied: usize,
    },
    #[error("expression is not exactly evaluable")]
    NotExact,
    #[error("singular point at `{subexpr}`")]
    Singular { subexpr: String },
    #[error("outside the real domain at `{subexpr}`")]
    Domain { subexpr: String },
}

/// Evaluate a single expression. Compiles a throwaway tape.
pub fn evaluate(e: &Expr, b: &Binding, mode: Mode) -> Result<Value, EvalError> {
    let tape = Tape::compile(std::slice::from_ref(e));
    match mode {
        Mode::Exact => tape
            .eval_exact(b)
            .map(|mut v| Value::Exact(v.pop().unwrap())),
        Mode::Float => tape.eval_float(b).map(|r| Value::Float(r.values[0])),
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const(Rational, f64),
    Var(usize),
    Func {
        func: usize,
        orders: Vec<i32>,
        args: Vec<usize>,
    },
    Add(Vec<usize>),
    Mul(Vec<usize>),
    Pow(usize, Rational, f64),
    Exp(usize),
}

/// Float evaluation result with the largest intermediate magnitude seen,
/// used to scale the zero-test tolerance.
#[derive(Debug, Clone)]
pub struct FloatEval {
    pub values: Vec<f64>,
    pub scale: f64,
}

/// Compiled, shareable evaluation program for one or more expressions.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    nodes: Vec<Expr>,
    outputs: Vec<usize>,
    vars: Vec<Symbol>,
    funcs: Vec<Symbol>,
    exact: bool,
}

impl Tape {
    pub fn compile(roots: &[Expr]) -> Tape {
        let mut b = TapeBuilder::default();
        let outputs = roots.iter().map(|r| b.visit(r)).collect();
        let exact = roots.iter().all(Expr::is_rational_function);
        Tape {
            ops: b.ops,
            nodes: b.nodes,
            outputs,
            vars: b.vars,
            funcs: b.funcs,
            exact,
        }
    }

    /// Variable names in slot order.
    pub fn vars(&self) -> &[Symbol] {
        &self.vars
    }

    pub fn funcs(&self) -> &[Symbol] {
        &self.funcs
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn supports_exact(&self) -> bool {
        self.exact
    }

    fn func_table<'b>(&self, b: &'b Binding) -> Result<Vec<&'b Polynomial>, EvalError> {
        self.funcs
            .iter()
            .map(|f| {
                b.funcs
                    .get(&**f)
                    .ok_or_else(|| EvalError::UnboundFunction(f.to_string()))
            })
            .collect()
    }

    fn check_arity(&self, table: &[&Polynomial]) -> Result<(), EvalError> {
        for op in &self.ops {
            if let Op::Func { func, args, .. } = op {
                if table[*func].arity() != args.len() {
                    return Err(EvalError::ArityMismatch {
                        name: self.funcs[*func].to_string(),
                        bound: table[*func].arity(),
                        applied: args.len(),
                    });
                }
            }
        }
        Ok(())
    }

    fn singular(&self, i: usize) -> EvalError {
        EvalError::Singular {
            subexpr: self.nodes[i].to_string(),
        }
    }

    pub fn eval_exact(&self, b: &Binding) -> Result<Vec<Rational>, EvalError> {
        if !self.exact {
            return Err(EvalError::NotExact);
        }
        let vars: Vec<Rational> = self
            .vars
            .iter()
            .map(|v| match b.vars.get(&**v) {
                Some(Value::Exact(r)) => Ok(r.clone()),
                Some(Value::Float(_)) => Err(EvalError::NotExact),
                None => Err(EvalError::UnboundVariable(v.to_string())),
            })
            .collect::<Result<_, _>>()?;
        let table = self.func_table(b)?;
        self.check_arity(&table)?;
        let mut deriv_cache: HashMap<(usize, Vec<i32>), Vec<(Vec<u32>, Rational)>> = HashMap::new();
        let mut slots: Vec<Rational> = Vec::with_capacity(self.ops.len());
        for (i, op) in self.ops.iter().enumerate() {
            let v = match op {
                Op::Const(r, _) => r.clone(),
                Op::Var(k) => vars[*k].clone(),
                Op::Func { func, orders, args } => {
                    let terms = deriv_cache
                        .entry((*func, orders.clone()))
                        .or_insert_with(|| table[*func].derivative_terms(orders));
                    let mut acc = Rational::zero();
                    for (exps, c) in terms.iter() {
                        let mut t = c.clone();
                        for (a, &e) in args.iter().zip(exps) {
                            if e > 0 {
                                t *= num_traits::pow(slots[*a].clone(), e as usize);
                            }
                        }
                        acc += t;
                    }
                    acc
                }
                Op::Add(xs) => xs.iter().fold(Rational::zero(), |acc, x| acc + &slots[*x]),
                Op::Mul(xs) => {
                    let mut acc = slots[xs[0]].clone();
                    for x in &xs[1..] {
                        acc *= &slots[*x];
                    }
                    acc
                }
                Op::Pow(x, r, _) => {
                    let base = &slots[*x];
                    if base.is_zero() && r.is_negative() {
                        return Err(self.singular(i));
                    }
                    let e = r.to_integer().to_i32().ok_or(EvalError::NotExact)?;
                    pow_rational(base, e)
                }
                Op::Exp(x) => {
                    if slots[*x].is_zero() {
                        Rational::from_integer(1.into())
                    } else {
                        return Err(EvalError::NotExact);
                    }
                }
            };
            slots.push(v);
        }
        Ok(self.outputs.iter().map(|&o| slots[o].clone()).collect())
    }

    pub fn eval_float(&self, b: &Binding) -> Result<FloatEval, EvalError> {
        let vars: Vec<f64> = self
            .vars
            .iter()
            .map(|v| {
                b.vars
                    .get(&**v)
                    .map(Value::to_f64)
                    .ok_or_else(|| EvalError::UnboundVariable(v.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let table = self.func_table(b)?;
        self.check_arity(&table)?;
        let mut deriv_cache: HashMap<(usize, Vec<i32>), Vec<(Vec<u32>, f64)>> = HashMap::new();
        let mut slots = vec![0.0; self.ops.len()];
        self.run_float(
            &vars,
            |func, orders| {
                deriv_cache
                    .entry((func, orders.to_vec()))
                    .or_insert_with(|| {
                        table[func]
                            .derivative_terms(orders)
                            .into_iter()
                            .map(|(e, c)| (e, c.to_f64().unwrap_or(f64::NAN)))
                            .collect()
                    })
                    .clone()
            },
            &mut slots,
        )
    }

    /// Float evaluation of a tape without opaque symbols into a reusable
    /// buffer; the hot path of the integrators.
    pub fn eval_plain(
        &self,
        vars: &[f64],
        slots: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        debug_assert!(self.funcs.is_empty());
        slots.resize(self.ops.len(), 0.0);
        let r = self.run_float(vars, |_, _| Vec::new(), slots)?;
        out.copy_from_slice(&r.values);
        Ok(())
    }

    fn run_float<F>(
        &self,
        vars: &[f64],
        mut poly: F,
        slots: &mut [f64],
    ) -> Result<FloatEval, EvalError>
    where
        F: FnMut(usize, &[i32]) -> Vec<(Vec<u32>, f64)>,
    {
        let mut scale: f64 = 0.0;
        for (i, op) in self.ops.iter().enumerate() {
            let v = match op {
                Op::Const(_, x) => *x,
                Op::Var(k) => vars[*k],
                Op::Func { func, orders, args } => {
                    let mut acc = 0.0;
                    for (exps, c) in poly(*func, orders) {
                        let mut t = c;
                        for (a, &e) in args.iter().zip(&exps) {
                            if e > 0 {
                                t *= slots[*a].powi(e as i32);
                            }
                        }
                        scale = scale.max(t.abs());
                        acc += t;
                    }
                    acc
                }
                Op::Add(xs) => xs.iter().map(|x| slots[*x]).sum(),
                Op::Mul(xs) => xs.iter().map(|x| slots[*x]).product(),
                Op::Pow(x, r, rf) => {
                    let base = slots[*x];
                    if base == 0.0 && r.is_negative() {
                        return Err(self.singular(i));
                    }
                    if r.is_integer() {
                        base.powi(r.to_integer().to_i32().unwrap_or(i32::MAX))
                    } else {
                        if base < 0.0 {
                            return Err(EvalError::Domain {
                                subexpr: self.nodes[i].to_string(),
                            });
                        }
                        base.powf(*rf)
                    }
                }
                Op::Exp(x) => slots[*x].exp(),
            };
            if !v.is_finite() {
                return Err(self.singular(i));
            }
            scale = scale.max(v.abs());
            slots[i] = v;
        }
        Ok(FloatEval {
            values: self.outputs.iter().map(|&o| slots[o]).collect(),
            scale,
        })
    }
}

#[derive(Default)]
struct TapeBuilder {
    ops: Vec<Op>,
    nodes: Vec<Expr>,
    index: HashMap<usize, usize>,
    vars: Vec<Symbol>,
    var_index: HashMap<Symbol, usize>,
    funcs: Vec<Symbol>,
    func_index: HashMap<Symbol, usize>,
}

impl TapeBuilder {
    fn visit(&mut self, e: &Expr) -> usize {
        if let Some(&i) = self.index.get(&e.id()) {
            return i;
        }
        let op = match e.node() {
            Node::Num(r) => Op::Const(r.clone(), r.to_f64().unwrap_or(f64::NAN)),
            Node::Var(v) => {
                let next = self.vars.len();
                let k = *self.var_index.entry(v.clone()).or_insert(next);
                if k == next {
                    self.vars.push(v.clone());
                }
                Op::Var(k)
            }
            Node::Func(app) => {
                let args = app.args.iter().map(|a| self.visit(a)).collect();
                let next = self.funcs.len();
                let k = *self.func_index.entry(app.name.clone()).or_insert(next);
                if k == next {
                    self.funcs.push(app.name.clone());
                }
                Op::Func {
                    func: k,
                    orders: app.orders.clone(),
                    args,
                }
            }
            Node::Add(xs) => Op::Add(xs.iter().map(|x| self.visit(x)).collect()),
            Node::Mul(xs) => Op::Mul(xs.iter().map(|x| self.visit(x)).collect()),
            Node::Pow(b, r) => Op::Pow(self.visit(b), r.clone(), r.to_f64().unwrap_or(f64::NAN)),
            Node::Exp(a) => Op::Exp(self.visit(a)),
        };
        let i = self.ops.len();
        self.ops.push(op);
        self.nodes.push(e.clone());
        self.index.insert(e.id(), i);
        i
    }
}
