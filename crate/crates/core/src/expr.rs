//! Symbolic scalar expressions in the coordinates `x1..xn`.
//!
//! Expressions are immutable reference-counted trees built only through the
//! smart constructors below, which apply exactly four rewrites: `0·e → 0`,
//! `1·e → e`, `e + 0 → e` and constant folding on exact rationals. Nothing
//! else is simplified, so the shape of a derivative is predictable and zero
//! testing happens numerically downstream.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::ops;

use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, One, Zero};

use crate::math;

/// Exact rational constant.
pub type Rational = num_rational::Ratio<i64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        }
    }
}

/// One node of an expression tree. Variables are stored 0-based.
#[derive(Debug)]
pub enum Node {
    Const(Rational),
    Var(usize),
    Add(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, i32),
    Func(Func, Expr),
}

#[derive(Clone)]
pub struct Expr(Arc<Node>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    LogOfNonPositive,
}

/// Evaluation failure together with the offending subexpression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub subexpression: String,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EvalErrorKind::DivisionByZero => {
                write!(f, "division by zero in `{}`", self.subexpression)
            }
            EvalErrorKind::LogOfNonPositive => {
                write!(f, "log of a non-positive argument in `{}`", self.subexpression)
            }
        }
    }
}

impl core::error::Error for EvalError {}

fn rational_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn checked_pow(base: &Rational, k: i32) -> Option<Rational> {
    if k < 0 && base.is_zero() {
        return None;
    }
    let mut acc = Rational::one();
    for _ in 0..k.unsigned_abs() {
        acc = acc.checked_mul(base)?;
    }
    if k < 0 {
        Rational::one().checked_div(&acc)
    } else {
        Some(acc)
    }
}

impl Expr {
    fn from_node(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: Rational) -> Expr {
        Expr::from_node(Node::Const(value))
    }

    pub fn int(value: i64) -> Expr {
        Expr::constant(Rational::from_integer(value))
    }

    pub fn ratio(numer: i64, denom: i64) -> Expr {
        Expr::constant(Rational::new(numer, denom))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    /// Coordinate `x_{index+1}`.
    pub fn var(index: usize) -> Expr {
        Expr::from_node(Node::Var(index))
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self.node() {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_one())
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(s) = x.checked_add(y) {
                return Expr::constant(s);
            }
        }
        if b.is_zero() {
            return a;
        }
        if a.is_zero() {
            return b;
        }
        Expr::from_node(Node::Add(a, b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(p) = x.checked_mul(y) {
                return Expr::constant(p);
            }
        }
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if a.is_one() {
            return b;
        }
        if b.is_one() {
            return a;
        }
        Expr::from_node(Node::Mul(a, b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if !y.is_zero() {
                if let Some(q) = x.checked_div(y) {
                    return Expr::constant(q);
                }
            }
        }
        Expr::from_node(Node::Div(a, b))
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::mul(Expr::int(-1), a)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(a, Expr::neg(b))
    }

    pub fn powi(a: Expr, k: i32) -> Expr {
        if let Some(c) = a.as_const() {
            if let Some(p) = checked_pow(c, k) {
                return Expr::constant(p);
            }
        }
        Expr::from_node(Node::Pow(a, k))
    }

    pub fn func(f: Func, a: Expr) -> Expr {
        Expr::from_node(Node::Func(f, a))
    }

    pub fn exp(a: Expr) -> Expr {
        Expr::func(Func::Exp, a)
    }

    pub fn log(a: Expr) -> Expr {
        Expr::func(Func::Log, a)
    }

    pub fn sin(a: Expr) -> Expr {
        Expr::func(Func::Sin, a)
    }

    pub fn cos(a: Expr) -> Expr {
        Expr::func(Func::Cos, a)
    }

    /// Exact partial derivative with respect to the 0-based coordinate `axis`.
    pub fn derivative(&self, axis: usize) -> Expr {
        match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(i) => {
                if *i == axis {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(a, b) => Expr::add(a.derivative(axis), b.derivative(axis)),
            Node::Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(axis), b.clone()),
                Expr::mul(a.clone(), b.derivative(axis)),
            ),
            Node::Div(a, b) => {
                let da = a.derivative(axis);
                let db = b.derivative(axis);
                let numer = Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db));
                Expr::div(numer, Expr::powi(b.clone(), 2))
            }
            Node::Pow(a, k) => {
                let da = a.derivative(axis);
                let outer = match *k {
                    1 => return da,
                    2 => Expr::mul(Expr::int(2), a.clone()),
                    _ => Expr::mul(Expr::int(*k as i64), Expr::powi(a.clone(), k - 1)),
                };
                Expr::mul(outer, da)
            }
            Node::Func(f, a) => {
                let da = a.derivative(axis);
                match f {
                    Func::Exp => Expr::mul(self.clone(), da),
                    Func::Log => Expr::div(da, a.clone()),
                    Func::Sin => Expr::mul(Expr::cos(a.clone()), da),
                    Func::Cos => Expr::mul(Expr::neg(Expr::sin(a.clone())), da),
                }
            }
        }
    }

    /// Pointwise value. `point[i]` is the coordinate `x_{i+1}`.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, EvalError> {
        match self.node() {
            Node::Const(c) => Ok(rational_to_f64(c)),
            Node::Var(i) => Ok(point[*i]),
            Node::Add(a, b) => Ok(a.evaluate(point)? + b.evaluate(point)?),
            Node::Mul(a, b) => Ok(a.evaluate(point)? * b.evaluate(point)?),
            Node::Div(a, b) => {
                let num = a.evaluate(point)?;
                let den = b.evaluate(point)?;
                if den == 0.0 {
                    return Err(self.error(EvalErrorKind::DivisionByZero));
                }
                Ok(num / den)
            }
            Node::Pow(a, k) => {
                let base = a.evaluate(point)?;
                if *k < 0 && base == 0.0 {
                    return Err(self.error(EvalErrorKind::DivisionByZero));
                }
                Ok(math::powi(base, *k))
            }
            Node::Func(f, a) => {
                let v = a.evaluate(point)?;
                apply_func(*f, v).ok_or_else(|| self.error(EvalErrorKind::LogOfNonPositive))
            }
        }
    }

    fn error(&self, kind: EvalErrorKind) -> EvalError {
        EvalError { kind, subexpression: format!("{self}") }
    }

    /// Largest 0-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self.node() {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Add(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
            Node::Pow(a, _) | Node::Func(_, a) => a.max_var(),
        }
    }

    /// True when the expression is a polynomial in the coordinates.
    pub fn is_polynomial(&self) -> bool {
        match self.node() {
            Node::Const(_) | Node::Var(_) => true,
            Node::Add(a, b) | Node::Mul(a, b) => a.is_polynomial() && b.is_polynomial(),
            Node::Div(a, b) => a.is_polynomial() && b.as_const().is_some_and(|c| !c.is_zero()),
            Node::Pow(a, k) => *k >= 0 && a.is_polynomial(),
            Node::Func(..) => false,
        }
    }

    /// Number of distinct nodes (shared subtrees counted once).
    pub fn dag_size(&self) -> usize {
        let mut seen = BTreeMap::new();
        self.collect_nodes(&mut seen);
        seen.len()
    }

    fn collect_nodes(&self, seen: &mut BTreeMap<usize, ()>) {
        let key = Arc::as_ptr(&self.0) as usize;
        if seen.insert(key, ()).is_some() {
            return;
        }
        match self.node() {
            Node::Const(_) | Node::Var(_) => {}
            Node::Add(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.collect_nodes(seen);
                b.collect_nodes(seen);
            }
            Node::Pow(a, _) | Node::Func(_, a) => a.collect_nodes(seen),
        }
    }
}

#[inline]
fn apply_func(f: Func, v: f64) -> Option<f64> {
    match f {
        Func::Exp => Some(math::exp(v)),
        Func::Log => {
            if v > 0.0 {
                Some(math::ln(v))
            } else {
                None
            }
        }
        Func::Sin => Some(math::sin(v)),
        Func::Cos => Some(math::cos(v)),
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Prints in the DSL syntax with full parenthesization, so that parsing the
/// output rebuilds the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => {
                let (n, d) = (*c.numer(), *c.denom());
                match (n < 0, d == 1) {
                    (false, true) => write!(f, "{n}"),
                    (true, true) => write!(f, "(-{})", n.unsigned_abs()),
                    (false, false) => write!(f, "({n}/{d})"),
                    (true, false) => write!(f, "(-{}/{d})", n.unsigned_abs()),
                }
            }
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Mul(a, b) => write!(f, "({a}*{b})"),
            Node::Div(a, b) => write!(f, "({a}/{b})"),
            Node::Pow(a, k) => {
                if *k < 0 {
                    write!(f, "({a}^-{})", k.unsigned_abs())
                } else {
                    write!(f, "({a}^{k})")
                }
            }
            Node::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(self, rhs)
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(self, rhs)
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::div(self, rhs)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Var(u32),
    Add(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, i32),
    Func(Func, u32),
}

/// A batch of expressions flattened into a shared instruction list.
///
/// Subtrees shared by pointer are evaluated once, which matters for the
/// product-rule derivatives whose factors are reused heavily. Results are
/// bitwise identical to [`Expr::evaluate`].
#[derive(Clone, Debug)]
pub struct Program {
    ops: Vec<Op>,
    sources: Vec<Expr>,
    outputs: Vec<u32>,
}

impl Program {
    pub fn compile(exprs: &[Expr]) -> Program {
        let mut prog = Program { ops: Vec::new(), sources: Vec::new(), outputs: Vec::new() };
        let mut slots = BTreeMap::new();
        for e in exprs {
            let slot = prog.emit(e, &mut slots);
            prog.outputs.push(slot);
        }
        prog
    }

    fn emit(&mut self, e: &Expr, slots: &mut BTreeMap<usize, u32>) -> u32 {
        let key = Arc::as_ptr(&e.0) as usize;
        if let Some(&s) = slots.get(&key) {
            return s;
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(rational_to_f64(c)),
            Node::Var(i) => Op::Var(*i as u32),
            Node::Add(a, b) => Op::Add(self.emit(a, slots), self.emit(b, slots)),
            Node::Mul(a, b) => Op::Mul(self.emit(a, slots), self.emit(b, slots)),
            Node::Div(a, b) => Op::Div(self.emit(a, slots), self.emit(b, slots)),
            Node::Pow(a, k) => Op::Pow(self.emit(a, slots), *k),
            Node::Func(f, a) => Op::Func(*f, self.emit(a, slots)),
        };
        let slot = self.ops.len() as u32;
        self.ops.push(op);
        self.sources.push(e.clone());
        slots.insert(key, slot);
        slot
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Evaluates every output at `point`. `scratch` is resized as needed.
    pub fn eval_into(
        &self,
        point: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        scratch.clear();
        scratch.reserve(self.ops.len());
        for (idx, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => point[i as usize],
                Op::Add(a, b) => scratch[a as usize] + scratch[b as usize],
                Op::Mul(a, b) => scratch[a as usize] * scratch[b as usize],
                Op::Div(a, b) => {
                    let den = scratch[b as usize];
                    if den == 0.0 {
                        return Err(self.sources[idx].error(EvalErrorKind::DivisionByZero));
                    }
                    scratch[a as usize] / den
                }
                Op::Pow(a, k) => {
                    let base = scratch[a as usize];
                    if k < 0 && base == 0.0 {
                        return Err(self.sources[idx].error(EvalErrorKind::DivisionByZero));
                    }
                    math::powi(base, k)
                }
                Op::Func(f, a) => match apply_func(f, scratch[a as usize]) {
                    Some(v) => v,
                    None => {
                        return Err(self.sources[idx].error(EvalErrorKind::LogOfNonPositive))
                    }
                },
            };
            scratch.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot as usize];
        }
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut scratch = Vec::new();
        let mut out = alloc::vec![0.0; self.outputs.len()];
        self.eval_into(point, &mut scratch, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::var(i)
    }

    #[test]
    fn rewrites_are_limited_to_the_four_rules() {
        assert!(Expr::mul(Expr::zero(), Expr::log(x(0))).is_zero());
        assert_eq!(format!("{}", Expr::mul(Expr::one(), x(1))), "x2");
        assert_eq!(format!("{}", Expr::add(x(0), Expr::zero())), "x1");
        assert_eq!(format!("{}", Expr::div(Expr::int(3), Expr::int(6))), "(1/2)");
        // x - x is not simplified structurally.
        assert!(!Expr::sub(x(0), x(0)).is_zero());
    }

    #[test]
    fn derivative_examples() {
        let p = [0.3, 0.7];
        let d = Expr::exp(x(1)).derivative(1);
        assert_eq!(d.evaluate(&p).unwrap(), math::exp(0.7));
        let d = Expr::mul(x(0), x(1)).derivative(0);
        assert_eq!(d.evaluate(&p).unwrap(), 0.7);
    }

    #[test]
    fn evaluation_errors_name_the_subexpression() {
        let e = Expr::div(Expr::one(), x(0));
        let err = e.evaluate(&[0.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
        assert_eq!(err.subexpression, "(1/x1)");
        let e = Expr::log(x(0));
        assert_eq!(e.evaluate(&[-1.0]).unwrap_err().kind, EvalErrorKind::LogOfNonPositive);
    }

    #[test]
    fn program_matches_tree_bitwise() {
        let e = Expr::exp(Expr::mul(Expr::int(2), x(1))) / (x(0) + Expr::ratio(1, 3));
        let es = [e.clone(), e.derivative(0), e.derivative(1)];
        let prog = Program::compile(&es);
        let p = [0.41, -0.23];
        let out = prog.eval(&p).unwrap();
        for (o, e) in out.iter().zip(&es) {
            assert_eq!(o.to_bits(), e.evaluate(&p).unwrap().to_bits());
        }
    }

    #[test]
    fn constant_folding_skips_on_overflow() {
        let big = Expr::int(i64::MAX / 2);
        let e = Expr::mul(big.clone(), Expr::int(4));
        assert!(e.as_const().is_none());
        assert!(Expr::powi(Expr::int(0), -1).as_const().is_none());
    }
}
