//! Vector fields, systems of fields and box domains.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{EvalError, Expr, Program};

/// A first-order operator `Σ_k c_k(x) ∂_k`, stored as its coefficient list.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub coeffs: Vec<Expr>,
}

impl VectorField {
    pub fn new(coeffs: Vec<Expr>) -> VectorField {
        VectorField { coeffs }
    }

    pub fn zero(n: usize) -> VectorField {
        VectorField { coeffs: (0..n).map(|_| Expr::zero()).collect() }
    }

    /// The coordinate field `∂_{axis+1}`.
    pub fn coordinate(n: usize, axis: usize) -> VectorField {
        let mut f = VectorField::zero(n);
        f.coeffs[axis] = Expr::one();
        f
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_structurally_zero(&self) -> bool {
        self.coeffs.iter().all(Expr::is_zero)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.coeffs.iter().map(|c| c.evaluate(x)).collect()
    }

    /// Applies the field to a scalar function: `Σ_k c_k ∂_k u`.
    pub fn apply(&self, u: &Expr) -> Expr {
        let mut acc = Expr::zero();
        for (k, c) in self.coeffs.iter().enumerate() {
            acc = Expr::add(acc, Expr::mul(c.clone(), u.derivative(k)));
        }
        acc
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| Expr::add(a.clone(), b.clone()))
            .collect();
        VectorField { coeffs }
    }

    pub fn scale(&self, s: &Expr) -> VectorField {
        VectorField { coeffs: self.coeffs.iter().map(|c| Expr::mul(s.clone(), c.clone())).collect() }
    }

    pub fn is_polynomial(&self) -> bool {
        self.coeffs.iter().all(Expr::is_polynomial)
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            if c.is_one() {
                write!(f, "D{}", k + 1)?;
            } else {
                write!(f, "{c}*D{}", k + 1)?;
            }
        }
        if first {
            f.write_str("0*D1")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SystemError {
    DimensionTooSmall(usize),
    NoFields,
    WrongLength { field: usize, expected: usize, found: usize },
    VariableOutOfRange { field: usize, index: usize, dim: usize },
}

impl fmt::Display for SystemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemError::DimensionTooSmall(n) => write!(f, "dimension must be at least 2, got {n}"),
            SystemError::NoFields => f.write_str("a system needs at least one field"),
            SystemError::WrongLength { field, expected, found } => {
                write!(f, "field {} has {found} components, expected {expected}", field + 1)
            }
            SystemError::VariableOutOfRange { field, index, dim } => write!(
                f,
                "field {} references x{} but the dimension is {dim}",
                field + 1,
                index + 1
            ),
        }
    }
}

impl core::error::Error for SystemError {}

/// `m` vector fields on `R^n` plus an optional declared bracket depth.
#[derive(Clone, Debug)]
pub struct VectorFieldSystem {
    n: usize,
    names: Vec<String>,
    fields: Vec<VectorField>,
    step_hint: Option<usize>,
}

impl VectorFieldSystem {
    pub fn new(
        n: usize,
        names: Vec<String>,
        fields: Vec<VectorField>,
        step_hint: Option<usize>,
    ) -> Result<VectorFieldSystem, SystemError> {
        if n < 2 {
            return Err(SystemError::DimensionTooSmall(n));
        }
        if fields.is_empty() {
            return Err(SystemError::NoFields);
        }
        for (i, f) in fields.iter().enumerate() {
            if f.dim() != n {
                return Err(SystemError::WrongLength { field: i, expected: n, found: f.dim() });
            }
            for c in &f.coeffs {
                if let Some(v) = c.max_var() {
                    if v >= n {
                        return Err(SystemError::VariableOutOfRange { field: i, index: v, dim: n });
                    }
                }
            }
        }
        let names = if names.len() == fields.len() {
            names
        } else {
            (1..=fields.len()).map(|i| format!("X{i}")).collect()
        };
        Ok(VectorFieldSystem { n, names, fields, step_hint })
    }

    /// Builds a system from unnamed fields.
    pub fn from_fields(n: usize, fields: Vec<VectorField>) -> Result<VectorFieldSystem, SystemError> {
        VectorFieldSystem::new(n, Vec::new(), fields, None)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn field(&self, j: usize) -> &VectorField {
        &self.fields[j]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn step_hint(&self) -> Option<usize> {
        self.step_hint
    }

    pub fn with_step_hint(mut self, step: Option<usize>) -> VectorFieldSystem {
        self.step_hint = step;
        self
    }

    pub fn is_polynomial(&self) -> bool {
        self.fields.iter().all(VectorField::is_polynomial)
    }

    /// The horizontal gradient `(X_1 u, …, X_m u)`.
    pub fn gradient(&self, u: &Expr) -> Vec<Expr> {
        self.fields.iter().map(|f| f.apply(u)).collect()
    }

    /// `X^J u = X_{j1}(X_{j2}(… X_{jl} u))` for a 0-based multi-index.
    pub fn apply_multi(&self, multi: &[usize], u: &Expr) -> Expr {
        let mut acc = u.clone();
        for &j in multi.iter().rev() {
            acc = self.fields[j].apply(&acc);
        }
        acc
    }

    /// Compiles the `m × n` coefficient matrix, row-major by field.
    pub fn compile(&self) -> Program {
        let all: Vec<Expr> = self.fields.iter().flat_map(|f| f.coeffs.iter().cloned()).collect();
        Program::compile(&all)
    }

    /// Prints the system in the DSL; parsing the output yields an equal system.
    pub fn to_source(&self) -> String {
        let mut s = format!("dim {}", self.n);
        for (name, f) in self.names.iter().zip(&self.fields) {
            s.push_str(";\n");
            s.push_str(name);
            s.push_str(" = ");
            s.push_str(&f.to_string());
        }
        if let Some(step) = self.step_hint {
            s.push_str(&format!(";\nstep {step}"));
        }
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainError {
    EmptyInterval { axis: usize },
    DimensionMismatch,
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainError::EmptyInterval { axis } => {
                write!(f, "axis {} has an empty interval", axis + 1)
            }
            DomainError::DimensionMismatch => f.write_str("lower and upper corners differ in length"),
        }
    }
}

impl core::error::Error for DomainError {}

/// A box, optionally cut down to `{g < 0}`.
#[derive(Clone, Debug)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub indicator: Option<Expr>,
    pub label: String,
}

impl DomainSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, label: &str) -> Result<DomainSpec, DomainError> {
        if lo.len() != hi.len() {
            return Err(DomainError::DimensionMismatch);
        }
        for (axis, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a < b) {
                return Err(DomainError::EmptyInterval { axis });
            }
        }
        Ok(DomainSpec { lo, hi, indicator: None, label: label.to_string() })
    }

    /// The cube `[-half, half]^n`.
    pub fn cube(n: usize, half: f64) -> DomainSpec {
        DomainSpec {
            lo: alloc::vec![-half; n],
            hi: alloc::vec![half; n],
            indicator: None,
            label: format!("cube[{half}]"),
        }
    }

    /// Euclidean ball of radius `rad` about the origin, inside its bounding cube.
    pub fn ball(n: usize, rad: f64) -> DomainSpec {
        let mut g = Expr::int(0);
        for i in 0..n {
            g = Expr::add(g, Expr::powi(Expr::var(i), 2));
        }
        let r2 = crate::expr::Rational::approximate_float(rad * rad).unwrap_or_else(|| {
            crate::expr::Rational::from_integer(1)
        });
        let mut d = DomainSpec::cube(n, rad);
        d.indicator = Some(Expr::sub(g, Expr::constant(r2)));
        d.label = format!("ball[{rad}]");
        d
    }

    pub fn with_indicator(mut self, g: Expr) -> DomainSpec {
        self.indicator = Some(g);
        self
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn box_volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Membership in the closure of the domain (box closure intersected with `g ≤ 0`).
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        if !self.in_box(x) {
            return false;
        }
        match &self.indicator {
            None => true,
            Some(g) => g.evaluate(x).map(|v| v <= 1e-12).unwrap_or(false),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let open_box = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v > *a && *v < *b);
        if !open_box {
            return false;
        }
        match &self.indicator {
            None => true,
            Some(g) => g.evaluate(x).map(|v| v < 0.0).unwrap_or(false),
        }
    }
}
