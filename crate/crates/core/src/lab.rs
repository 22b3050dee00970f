//! Test functions, quadrature norms and the empirical inequality suites.
//!
//! Every suite evaluates a family of smooth compactly supported bumps and
//! reports the largest observed ratio as its empirical constant. A constant is
//! accepted when it stays within a factor 2 as the family is extended from its
//! mild members to its most concentrated ones; norms are recomputed on a
//! grid with twice the resolution and a drift above 0.5% flags the result.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::ToPrimitive;
use rand::Rng;

use crate::exponents::{critical_exponents, rational_from_f64, Embedding, ExponentError, GnParams};
use crate::expr::{EvalError, Expr, Program, Rational};
use crate::geometry::{geometric_radii, VolumeProfile};
use crate::lie::{CommutatorBasis, LieError};
use crate::math;
use crate::metric::{DistanceOracle, MetricError};
use crate::rng;
use crate::system::{DomainSpec, VectorFieldSystem};

/// Largest tolerated growth of an empirical constant across a family sweep.
pub const GROWTH_LIMIT: f64 = 2.0;
/// Largest tolerated relative change of a quantity under grid doubling.
pub const QUADRATURE_DRIFT: f64 = 0.005;
/// Cap on the DAG size of a derived expression.
pub const EXPRESSION_CAP: usize = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub enum LabError {
    Eval(EvalError),
    Lie(LieError),
    Metric(MetricError),
    Exponent(ExponentError),
    ExpressionTooLarge { size: usize, cap: usize },
    DerivativeOrder { order: usize, max: usize },
    InvalidInput(String),
    EmptyFamily,
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::Eval(e) => write!(f, "{e}"),
            LabError::Lie(e) => write!(f, "{e}"),
            LabError::Metric(e) => write!(f, "{e}"),
            LabError::Exponent(e) => write!(f, "{e}"),
            LabError::ExpressionTooLarge { size, cap } => {
                write!(f, "derived expression has {size} nodes, above the cap of {cap}")
            }
            LabError::DerivativeOrder { order, max } => {
                write!(f, "derivative order {order} exceeds the configured maximum {max}")
            }
            LabError::InvalidInput(s) => f.write_str(s),
            LabError::EmptyFamily => f.write_str("test family has no nonzero member"),
        }
    }
}

impl core::error::Error for LabError {}

impl From<EvalError> for LabError {
    fn from(e: EvalError) -> LabError {
        LabError::Eval(e)
    }
}

impl From<LieError> for LabError {
    fn from(e: LieError) -> LabError {
        LabError::Lie(e)
    }
}

impl From<MetricError> for LabError {
    fn from(e: MetricError) -> LabError {
        LabError::Metric(e)
    }
}

impl From<ExponentError> for LabError {
    fn from(e: ExponentError) -> LabError {
        LabError::Exponent(e)
    }
}

/// Radial profile of a bump in the normalized radius `ρ`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Profile {
    /// `exp(−1/(1−ρ²))`.
    Standard,
    /// `exp(1 − 1/(1−ρ^{2m}))`: equal to 1 at the center and flat for large `m`.
    Plateau(u32),
}

/// A smooth function supported in the ellipsoid
/// `ρ² = Σ ((x_a − c_a)/w_a)² < 1`, given by `factor · profile(ρ)` inside.
#[derive(Clone, Debug)]
pub struct TestFunction {
    pub expression: Expr,
    pub support: DomainSpec,
    pub center: Vec<f64>,
    pub widths: Vec<f64>,
    pub profile: Profile,
    pub params: Vec<(String, f64)>,
}

fn rational(x: f64) -> Rational {
    rational_from_f64(x).unwrap_or_else(|| Rational::from_integer(0))
}

fn rat_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl TestFunction {
    pub fn bump(center: &[f64], widths: &[f64], profile: Profile) -> TestFunction {
        TestFunction::scaled_bump(center, widths, profile, None)
    }

    /// A bump multiplied by `factor` (an expression, e.g. `x1`).
    pub fn scaled_bump(center: &[f64], widths: &[f64], profile: Profile, factor: Option<Expr>) -> TestFunction {
        let n = center.len();
        let cr: Vec<Rational> = center.iter().map(|&c| rational(c)).collect();
        let wr: Vec<Rational> = widths.iter().map(|&w| rational(w)).collect();
        let mut rho2 = Expr::zero();
        for a in 0..n {
            let t = Expr::div(Expr::sub(Expr::var(a), Expr::constant(cr[a])), Expr::constant(wr[a]));
            rho2 = Expr::add(rho2, Expr::powi(t, 2));
        }
        let inner = match profile {
            Profile::Standard => Expr::exp(Expr::neg(Expr::div(Expr::one(), Expr::sub(Expr::one(), rho2.clone())))),
            Profile::Plateau(m) => Expr::exp(Expr::sub(
                Expr::one(),
                Expr::div(Expr::one(), Expr::sub(Expr::one(), Expr::powi(rho2.clone(), m.max(1) as i32))),
            )),
        };
        let expression = match factor {
            Some(f) => Expr::mul(f, inner),
            None => inner,
        };
        let center: Vec<f64> = cr.iter().map(rat_f64).collect();
        let widths: Vec<f64> = wr.iter().map(rat_f64).collect();
        let lo = (0..n).map(|a| center[a] - widths[a]).collect();
        let hi = (0..n).map(|a| center[a] + widths[a]).collect();
        let support = DomainSpec { lo, hi, indicator: Some(Expr::sub(rho2, Expr::one())), label: "ellipsoid".into() };
        TestFunction { expression, support, center, widths, profile, params: Vec::new() }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> TestFunction {
        self.params.push((name.to_string(), value));
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn rho2(&self, x: &[f64]) -> f64 {
        (0..self.dim()).map(|a| math::powi((x[a] - self.center[a]) / self.widths[a], 2)).sum()
    }

    /// Value at `x`, zero outside the support.
    pub fn value(&self, x: &[f64]) -> Result<f64, LabError> {
        if self.rho2(x) >= 1.0 {
            return Ok(0.0);
        }
        Ok(self.expression.evaluate(x)?)
    }

    /// Largest `|u|` on the shell `ρ = 1 − 1e-9`, over `samples` directions.
    pub fn boundary_max(&self, samples: usize, seed: u64) -> Result<f64, LabError> {
        let n = self.dim();
        let mut g = rng::stream(seed, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let v: Vec<f64> = (0..n).map(|_| g.random::<f64>() * 2.0 - 1.0).collect();
            let r = math::norm2(&v);
            if r < 1e-3 {
                continue;
            }
            let x: Vec<f64> = (0..n).map(|a| self.center[a] + self.widths[a] * v[a] / r * (1.0 - 1e-9)).collect();
            worst = worst.max(math::abs(self.expression.evaluate(&x)?));
        }
        Ok(worst)
    }

    /// `c·u` with the same support.
    pub fn scale(&self, c: f64) -> TestFunction {
        let mut t = self.clone();
        t.expression = Expr::mul(Expr::constant(rational(c)), self.expression.clone());
        t
    }

    /// Is the closed support inside the domain? Checked on the support
    /// boundary and its bounding box corners of the shell.
    pub fn inside(&self, domain: &DomainSpec) -> bool {
        let n = self.dim();
        if (0..n).any(|a| self.center[a] - self.widths[a] <= domain.lo[a] || self.center[a] + self.widths[a] >= domain.hi[a]) {
            return false;
        }
        let mut g = rng::stream(0x5eed, 1);
        (0..512).all(|_| {
            let v: Vec<f64> = (0..n).map(|_| g.random::<f64>() * 2.0 - 1.0).collect();
            let r = math::norm2(&v).max(1e-12);
            let x: Vec<f64> = (0..n).map(|a| self.center[a] + self.widths[a] * v[a] / r).collect();
            domain.contains(&x)
        })
    }
}

/// Midpoint quadrature over the support box with `nodes` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadPlan {
    pub nodes: usize,
    pub refine: bool,
}

impl QuadPlan {
    /// `129` cells per axis in dimension 2, `33` above.
    pub fn for_dim(n: usize) -> QuadPlan {
        QuadPlan { nodes: if n <= 2 { 129 } else { 33 }, refine: true }
    }

    pub fn with_nodes(nodes: usize) -> QuadPlan {
        QuadPlan { nodes, refine: true }
    }
}

/// Values of several expressions at the quadrature nodes inside a support.
#[derive(Clone, Debug)]
pub struct Sampled {
    pub cell: f64,
    pub width: usize,
    /// Row-major: `values[i * width + e]`.
    pub values: Vec<f64>,
    pub points: Vec<f64>,
    pub dim: usize,
}

impl Sampled {
    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.values.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn integral(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len() {
            s += f(self.row(i));
        }
        s * self.cell
    }
}

/// Evaluates `exprs` at the midpoints of a `nodes`-per-axis grid on the
/// support box of `u`, keeping the points strictly inside the support.
pub fn sample(u: &TestFunction, exprs: &[Expr], nodes: usize) -> Result<Sampled, LabError> {
    let n = u.dim();
    let prog = Program::compile(exprs);
    let width = exprs.len();
    let step: Vec<f64> = u.widths.iter().map(|w| 2.0 * w / nodes as f64).collect();
    let cell: f64 = step.iter().product();
    let total = nodes.pow(n as u32);
    let mut values = Vec::new();
    let mut points = Vec::new();
    let mut x = vec![0.0; n];
    let mut out = vec![0.0; width];
    let mut scratch = Vec::new();
    for idx in 0..total {
        let mut rest = idx;
        for a in 0..n {
            let k = rest % nodes;
            rest /= nodes;
            x[a] = u.center[a] - u.widths[a] + (k as f64 + 0.5) * step[a];
        }
        if u.rho2(&x) >= 1.0 {
            continue;
        }
        prog.eval_into(&x, &mut scratch, &mut out)?;
        values.extend_from_slice(&out);
        points.extend_from_slice(&x);
    }
    Ok(Sampled { cell, width, values, points, dim: n })
}

/// A quadrature value with its relative change under grid doubling.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Estimate {
    pub value: f64,
    pub drift: f64,
}

impl Estimate {
    pub fn flagged(&self) -> bool {
        self.drift > QUADRATURE_DRIFT
    }
}

/// Evaluates `quantity` on the base grid and, if the plan asks for it, on the
/// doubled grid; the refined value is reported.
pub fn estimate(
    u: &TestFunction,
    exprs: &[Expr],
    plan: QuadPlan,
    quantity: impl Fn(&Sampled) -> f64,
) -> Result<Estimate, LabError> {
    let coarse = quantity(&sample(u, exprs, plan.nodes)?);
    if !plan.refine {
        return Ok(Estimate { value: coarse, drift: 0.0 });
    }
    let fine = quantity(&sample(u, exprs, 2 * plan.nodes)?);
    let scale = math::abs(fine).max(math::abs(coarse));
    let drift = if scale == 0.0 { 0.0 } else { math::abs(fine - coarse) / scale };
    Ok(Estimate { value: fine, drift })
}

/// `‖u‖_{L^p}` by midpoint quadrature on the support.
pub fn lp_norm(u: &TestFunction, p: f64, plan: QuadPlan) -> Result<Estimate, LabError> {
    if !(p >= 1.0) {
        return Err(LabError::InvalidInput(format!("p = {p} < 1")));
    }
    estimate(u, &[u.expression.clone()], plan, |s| lp_of(s, 0, p))
}

fn lp_of(s: &Sampled, col: usize, p: f64) -> f64 {
    math::pow(s.integral(|r| math::pow(math::abs(r[col]), p)), 1.0 / p)
}

/// Default cap on the order of `X^J`.
pub const MAX_ORDER: usize = 3;

/// `X^J u` as an expression, `J` applied right to left.
pub fn derive(sys: &VectorFieldSystem, u: &TestFunction, multi: &[usize]) -> Result<Expr, LabError> {
    if multi.len() > MAX_ORDER {
        return Err(LabError::DerivativeOrder { order: multi.len(), max: MAX_ORDER });
    }
    if multi.iter().any(|&j| j >= sys.count()) {
        return Err(LabError::InvalidInput(format!("multi-index {multi:?} out of range")));
    }
    let e = sys.apply_multi(multi, &u.expression);
    let size = e.dag_size();
    if size > EXPRESSION_CAP {
        return Err(LabError::ExpressionTooLarge { size, cap: EXPRESSION_CAP });
    }
    Ok(e)
}

/// `‖X^J u‖_{L^p}`.
pub fn horizontal_derivative_norm(
    u: &TestFunction,
    sys: &VectorFieldSystem,
    multi: &[usize],
    p: f64,
    plan: QuadPlan,
) -> Result<Estimate, LabError> {
    let e = derive(sys, u, multi)?;
    estimate(u, &[e], plan, |s| lp_of(s, 0, p))
}

/// All multi-indices of length `k` over `m` fields, lexicographic.
pub fn multi_indices(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for base in &out {
            for j in 0..m {
                let mut v = base.clone();
                v.push(j);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// `[u, X^J u for |J| = k]`.
fn order_k_exprs(sys: &VectorFieldSystem, u: &TestFunction, k: usize) -> Result<Vec<Expr>, LabError> {
    let mut exprs = vec![u.expression.clone()];
    for j in multi_indices(sys.count(), k) {
        exprs.push(derive(sys, u, &j)?);
    }
    Ok(exprs)
}

/// `Σ_{|J|=k} ‖X^J u‖_p` from columns `1..` of a sample.
fn sum_derivative_norms(s: &Sampled, p: f64) -> f64 {
    (1..s.width).map(|c| lp_of(s, c, p)).sum()
}

/// `∫ |Xu|^p` with `|Xu| = (Σ_j (X_j u)²)^{1/2}` from columns `1..`.
fn gradient_power(s: &Sampled, p: f64) -> f64 {
    s.integral(|r| {
        let g2: f64 = r[1..].iter().map(|v| v * v).sum();
        math::pow(g2, 0.5 * p)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum Verdict {
    Pass,
    Fail,
    Flag,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Flag => "FLAG",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluated family member.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MemberRow {
    pub label: String,
    pub level: usize,
    pub params: Vec<(String, f64)>,
    pub ratio: f64,
    pub drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct InequalityReport {
    pub suite: String,
    /// Exponents used, as exact rationals where they are exact.
    pub exponents: BTreeMap<String, String>,
    pub constant: f64,
    pub family_size: usize,
    pub worst: Vec<(String, f64)>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
    pub rows: Vec<MemberRow>,
    /// Auxiliary numbers (probe growth, decay factors, swept thresholds).
    pub extras: BTreeMap<String, f64>,
}

impl InequalityReport {
    fn new(suite: &str) -> InequalityReport {
        InequalityReport {
            suite: suite.to_string(),
            exponents: BTreeMap::new(),
            constant: 0.0,
            family_size: 0,
            worst: Vec::new(),
            verdict: Verdict::Pass,
            notes: Vec::new(),
            rows: Vec::new(),
            extras: BTreeMap::new(),
        }
    }

    fn exponent(&mut self, name: &str, value: impl fmt::Display) {
        self.exponents.insert(name.to_string(), value.to_string());
    }

    /// Sets constant, worst witness and verdict from the rows: the constant is
    /// the largest ratio, and it must not exceed `GROWTH_LIMIT` times the
    /// largest ratio among members of level at most the median level.
    fn conclude(&mut self) {
        self.family_size = self.rows.len();
        let Some(worst) = self.rows.iter().filter(|r| r.ratio.is_finite()).max_by(|a, b| a.ratio.total_cmp(&b.ratio)) else {
            self.verdict = Verdict::Fail;
            self.notes.push("no finite ratio in the family".into());
            return;
        };
        self.constant = worst.ratio;
        self.worst = worst.params.clone();
        self.worst.insert(0, ("member".into(), self.rows.iter().position(|r| r == worst).unwrap_or(0) as f64));
        let mut levels: Vec<usize> = self.rows.iter().map(|r| r.level).collect();
        levels.sort_unstable();
        let median = levels[(levels.len() - 1) / 2];
        let base = self.rows.iter().filter(|r| r.level <= median).map(|r| r.ratio).fold(0.0, f64::max);
        let growth = if base > 0.0 { self.constant / base } else { f64::INFINITY };
        self.extras.insert("growth".into(), growth);
        if self.rows.iter().any(|r| !r.ratio.is_finite()) {
            self.verdict = Verdict::Fail;
            self.notes.push("a family member produced a non-finite ratio".into());
        } else if growth > GROWTH_LIMIT {
            self.verdict = Verdict::Fail;
            self.notes.push(format!("constant grows by {growth:.3} across the family sweep"));
        } else if self.rows.iter().any(|r| r.drift > QUADRATURE_DRIFT) {
            let worst_drift = self.rows.iter().map(|r| r.drift).fold(0.0, f64::max);
            self.verdict = Verdict::Flag;
            self.notes.push(format!("quadrature under-resolved: drift {worst_drift:.2e} under grid doubling"));
        } else {
            self.verdict = Verdict::Pass;
        }
    }

    fn push(&mut self, m: &Member, ratio: f64, drift: f64) {
        self.rows.push(MemberRow { label: m.label.clone(), level: m.level, params: m.u.params.clone(), ratio, drift });
    }
}

/// A family member with its concentration level (0 = mildest).
#[derive(Clone, Debug)]
pub struct Member {
    pub label: String,
    pub level: usize,
    pub u: TestFunction,
}

/// The point a family concentrates at, with the box exponents there.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Focus {
    pub point: Vec<f64>,
    pub weights: Vec<usize>,
}

impl Focus {
    pub fn isotropic(point: Vec<f64>) -> Focus {
        let n = point.len();
        Focus { point, weights: vec![1; n] }
    }
}

/// Largest `β ≤ 0.9` (shrunk by factors 0.8) such that the ellipsoid with
/// half-widths `β·shape` about `center` lies in the domain.
fn fit_width(domain: &DomainSpec, center: &[f64], shape: &[f64]) -> f64 {
    let mut beta = 0.9;
    for _ in 0..40 {
        let w: Vec<f64> = shape.iter().map(|s| beta * s).collect();
        if TestFunction::bump(center, &w, Profile::Standard).inside(domain) {
            return beta;
        }
        beta *= 0.8;
    }
    beta
}

/// Bumps at the focus with half-widths `β s^{w_a}` (anisotropic) or `β s`
/// (radial), `s = 2^{−j/2}`, `j = 0..=2·halvings`.
pub fn concentrating_family(domain: &DomainSpec, focus: &Focus, anisotropic: bool, halvings: usize) -> Vec<Member> {
    let n = focus.point.len();
    let beta = fit_width(domain, &focus.point, &vec![1.0; n]);
    let kind = if anisotropic { "aniso" } else { "radial" };
    (0..=2 * halvings)
        .map(|j| {
            let s = math::pow(2.0, -(j as f64) / 2.0);
            let widths: Vec<f64> = (0..n)
                .map(|a| beta * if anisotropic { math::powi(s, focus.weights[a] as i32) } else { s })
                .collect();
            let u = TestFunction::bump(&focus.point, &widths, Profile::Standard).with_param("s", s);
            Member { label: format!("{kind}(s=2^-{j}/2)"), level: j, u }
        })
        .collect()
}

/// Radial bumps of moderate size at `count` seeded centers of the domain.
pub fn scattered_family(domain: &DomainSpec, count: usize, seed: u64) -> Vec<Member> {
    let n = domain.dim();
    let mut g = rng::stream(seed, 0x5ca7);
    let mut out = Vec::new();
    let mut x = vec![0.0; n];
    let mut attempts = 0;
    while out.len() < count && attempts < 10_000 {
        attempts += 1;
        let lo: Vec<f64> = (0..n).map(|a| 0.8 * domain.lo[a] + 0.2 * domain.hi[a]).collect();
        let hi: Vec<f64> = (0..n).map(|a| 0.2 * domain.lo[a] + 0.8 * domain.hi[a]).collect();
        rng::uniform_in_box(&mut g, &lo, &hi, &mut x);
        if !domain.contains(&x) {
            continue;
        }
        let side = (0..n).map(|a| domain.hi[a] - domain.lo[a]).fold(f64::INFINITY, f64::min);
        let s = if out.len() % 2 == 0 { 0.25 } else { 0.15 } * side;
        let w = vec![s; n];
        let u = TestFunction::bump(&x, &w, Profile::Standard);
        if !u.inside(domain) {
            continue;
        }
        let k = out.len();
        out.push(Member { label: format!("scattered#{k}"), level: 0, u: u.with_param("s", s).with_param("x1", x[0]) });
    }
    out
}

/// The 24-member family: 9 anisotropic and 9 radial members concentrating at
/// the focus down to `s = 1/16`, and 6 scattered members.
pub fn standard_family(domain: &DomainSpec, focus: &Focus, seed: u64) -> Vec<Member> {
    let mut out = concentrating_family(domain, focus, true, 4);
    out.extend(concentrating_family(domain, focus, false, 4));
    out.extend(scattered_family(domain, 6, seed));
    out
}

/// Plateau powers resolved by the default quadrature in dimension `n`.
pub fn default_plateau_powers(n: usize) -> Vec<u32> {
    if n <= 2 {
        vec![1, 2, 4, 8]
    } else {
        vec![1, 2, 4]
    }
}

/// Plateau bumps `exp(1 − 1/(1−ρ^{2m}))` filling most of the domain, with
/// `m = 1, 2, 4, …`; flatter members have higher level.
pub fn plateau_family(domain: &DomainSpec, center: &[f64], powers: &[u32]) -> Vec<Member> {
    let n = domain.dim();
    let half: Vec<f64> = (0..n).map(|a| 0.5 * (domain.hi[a] - domain.lo[a])).collect();
    let beta = fit_width(domain, center, &half);
    let widths: Vec<f64> = half.iter().map(|h| beta * h).collect();
    powers
        .iter()
        .enumerate()
        .map(|(k, &m)| Member {
            label: format!("plateau(m={m})"),
            level: k,
            u: TestFunction::bump(center, &widths, Profile::Plateau(m)).with_param("m", f64::from(m)),
        })
        .collect()
}

/// Shared inputs of the suites.
#[derive(Clone, Debug)]
pub struct LabContext<'a> {
    pub sys: &'a VectorFieldSystem,
    pub domain: &'a DomainSpec,
    pub nu_tilde: u32,
    pub focus: Focus,
    pub plan: QuadPlan,
    pub seed: u64,
}

impl<'a> LabContext<'a> {
    pub fn new(sys: &'a VectorFieldSystem, domain: &'a DomainSpec, nu_tilde: u32, focus: Focus) -> LabContext<'a> {
        LabContext { sys, domain, nu_tilde, focus, plan: QuadPlan::for_dim(sys.dim()), seed: 0 }
    }

    pub fn family(&self) -> Vec<Member> {
        standard_family(self.domain, &self.focus, self.seed)
    }
}

fn r64(x: Rational) -> f64 {
    rat_f64(&x)
}

fn rat(n: i64) -> Rational {
    Rational::from_integer(n)
}

/// The subcritical target `q`, or the override in the critical case.
fn sobolev_q(nu_tilde: u32, k: u32, p: Rational, q_override: Option<Rational>) -> Result<Rational, LabError> {
    match critical_exponents(nu_tilde, k, p)? {
        Embedding::Subcritical { q } => Ok(q_override.unwrap_or(q)),
        Embedding::Critical => q_override.ok_or_else(|| {
            LabError::InvalidInput("kp = nu_tilde: every finite q is admissible, a q must be given".into())
        }),
        Embedding::Supercritical { .. } => Err(ExponentError::Regime(format!(
            "requires kp <= nu_tilde (kp = {}, nu_tilde = {nu_tilde})",
            rat(i64::from(k)) * p
        ))
        .into()),
    }
}

/// `‖u‖_q / Σ_{|J|=k} ‖X^J u‖_p` with its quadrature drift.
pub fn sobolev_ratio(
    sys: &VectorFieldSystem,
    u: &TestFunction,
    k: usize,
    p: f64,
    q: f64,
    plan: QuadPlan,
) -> Result<Estimate, LabError> {
    let exprs = order_k_exprs(sys, u, k)?;
    estimate(u, &exprs, plan, |s| lp_of(s, 0, q) / sum_derivative_norms(s, p))
}

/// Settings of the sharpness probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSettings {
    /// Exponent above the critical one; `None` uses `1.1 q`.
    pub q_prime: Option<f64>,
    pub halvings: usize,
}

impl Default for ProbeSettings {
    fn default() -> ProbeSettings {
        ProbeSettings { q_prime: None, halvings: 4 }
    }
}

/// Required growth of the probe ratio from `s = 1` to the smallest scale.
pub const PROBE_GROWTH: f64 = 2.0;

/// Sobolev inequality `‖u‖_q ≤ C Σ_{|J|=k} ‖X^J u‖_p` over `family`, with
/// the sharpness probe at `q' > q` over the anisotropic members concentrating
/// at the focus (`s = 1, 1/2, …`).
pub fn sobolev_suite(
    ctx: &LabContext<'_>,
    k: u32,
    p: Rational,
    q_override: Option<Rational>,
    family: &[Member],
    probe: Option<ProbeSettings>,
) -> Result<InequalityReport, LabError> {
    let q = sobolev_q(ctx.nu_tilde, k, p, q_override)?;
    let (pf, qf) = (r64(p), r64(q));
    let mut rep = InequalityReport::new("sobolev");
    rep.exponent("nu_tilde", ctx.nu_tilde);
    rep.exponent("k", k);
    rep.exponent("p", p);
    rep.exponent("q", q);
    for m in family {
        let e = sobolev_ratio(ctx.sys, &m.u, k as usize, pf, qf, ctx.plan)?;
        rep.push(m, e.value, e.drift);
    }
    rep.conclude();
    if let Some(settings) = probe {
        let qp = settings.q_prime.unwrap_or(1.1 * qf);
        rep.exponent("q_probe", format!("{qp}"));
        // Dyadic scales s = 1, 1/2, …: every second member of the half-step family.
        let members: Vec<Member> = concentrating_family(ctx.domain, &ctx.focus, true, settings.halvings)
            .into_iter()
            .filter(|m| m.level % 2 == 0)
            .collect();
        let mut ratios = Vec::new();
        for m in &members {
            ratios.push(sobolev_ratio(ctx.sys, &m.u, k as usize, pf, qp, ctx.plan)?.value);
        }
        let growth = ratios[ratios.len() - 1] / ratios[0];
        let monotone = ratios.windows(2).all(|w| w[1] >= 0.95 * w[0]);
        rep.extras.insert("probe_growth".into(), growth);
        rep.extras.insert("probe_monotone".into(), if monotone { 1.0 } else { 0.0 });
        for (j, r) in ratios.iter().enumerate() {
            rep.extras.insert(format!("probe_ratio_{j}"), *r);
        }
        if growth >= PROBE_GROWTH && monotone {
            rep.notes.push(format!("sharpness probe at q' = {qp}: ratio grows by {growth:.3}"));
        } else {
            rep.notes.push(format!(
                "sharpness probe at q' = {qp}: ratio grows by {growth:.3}, below the required {PROBE_GROWTH}"
            ));
            if rep.verdict == Verdict::Pass {
                rep.verdict = Verdict::Fail;
            }
        }
    }
    Ok(rep)
}

/// Which members of the two-norm interpolation family to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GnVariant {
    /// Explicit `(s1, s2)` with `θ` from the interpolation identity.
    GagliardoNirenberg { k: u32, p: Rational, s1: Rational, s2: Rational },
    Nash,
    Moser,
}

/// Validated parameters of a variant.
pub fn gn_params(nu_tilde: u32, variant: GnVariant) -> Result<(GnParams, Option<Rational>), ExponentError> {
    match variant {
        GnVariant::GagliardoNirenberg { k, p, s1, s2 } => {
            let (params, theta) = GnParams::gagliardo_nirenberg(nu_tilde, k, p, s1, s2)?;
            Ok((params, Some(theta)))
        }
        GnVariant::Nash => Ok((GnParams::nash(nu_tilde)?, None)),
        GnVariant::Moser => Ok((GnParams::moser(nu_tilde)?, None)),
    }
}

/// `‖u‖_{s2}^{b s2} ≤ C Σ_{|J|=k} ‖X^J u‖_p^p ‖u‖_{s1}^{a s1}` over the family.
/// Parameters violating the identities are rejected before any quadrature.
pub fn gn_nash_moser_suite(ctx: &LabContext<'_>, variant: GnVariant, family: &[Member]) -> Result<InequalityReport, LabError> {
    let (params, theta) = gn_params(ctx.nu_tilde, variant)?;
    let name = match variant {
        GnVariant::GagliardoNirenberg { .. } => "gagliardo-nirenberg",
        GnVariant::Nash => "nash",
        GnVariant::Moser => "moser",
    };
    let mut rep = InequalityReport::new(name);
    rep.exponent("nu_tilde", params.nu_tilde);
    rep.exponent("k", params.k);
    rep.exponent("p", params.p);
    rep.exponent("s1", params.s1);
    rep.exponent("s2", params.s2);
    rep.exponent("a", params.a);
    rep.exponent("b", params.b);
    if let Some(t) = theta {
        rep.exponent("theta", t);
    }
    let (p, s1, s2, a, b) = (r64(params.p), r64(params.s1), r64(params.s2), r64(params.a), r64(params.b));
    for m in family {
        let exprs = order_k_exprs(ctx.sys, &m.u, params.k as usize)?;
        let e = estimate(&m.u, &exprs, ctx.plan, |s| {
            let lhs = b * s2 * math::ln(lp_of(s, 0, s2));
            let dsum: f64 = (1..s.width).map(|c| math::pow(lp_of(s, c, p), p)).sum();
            let rhs = math::ln(dsum) + a * s1 * math::ln(lp_of(s, 0, s1));
            math::exp(lhs - rhs)
        })?;
        rep.push(m, e.value, e.drift);
    }
    rep.conclude();
    Ok(rep)
}

/// A closed `C¹` boundary: the ellipse (n = 2) or ellipsoid (n = 3) with the
/// given center and semi-axes.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Shape {
    pub center: Vec<f64>,
    pub semi: Vec<f64>,
}

impl Shape {
    pub fn volume(&self) -> Result<f64, LabError> {
        match self.semi.len() {
            2 => Ok(math::PI * self.semi[0] * self.semi[1]),
            3 => Ok(4.0 / 3.0 * math::PI * self.semi.iter().product::<f64>()),
            n => Err(LabError::InvalidInput(format!("shapes are supported in dimensions 2 and 3, not {n}"))),
        }
    }
}

/// `P_X(E) = ∫_{∂E} (Σ_j ⟨X_j, η⟩²)^{1/2} dH_{n−1}`, with `nodes` points per
/// angle (trapezoid in the periodic angle, midpoint in the polar one).
pub fn x_perimeter(sys: &VectorFieldSystem, shape: &Shape, nodes: usize) -> Result<f64, LabError> {
    let prog = sys.compile();
    let (n, m) = (sys.dim(), sys.count());
    if shape.center.len() != n || shape.semi.iter().any(|s| !(*s > 0.0)) {
        return Err(LabError::InvalidInput("degenerate shape parameterization".into()));
    }
    let mut out = vec![0.0; n * m];
    let mut scratch = Vec::new();
    let mut flux = |x: &[f64], normal: &[f64]| -> Result<f64, LabError> {
        prog.eval_into(x, &mut scratch, &mut out)?;
        let mut s = 0.0;
        for j in 0..m {
            let d: f64 = (0..n).map(|i| out[j * n + i] * normal[i]).sum();
            s += d * d;
        }
        Ok(math::sqrt(s))
    };
    let (c, e) = (&shape.center, &shape.semi);
    match n {
        2 => {
            let dt = 2.0 * math::PI / nodes as f64;
            let mut total = 0.0;
            for i in 0..nodes {
                let t = i as f64 * dt;
                let x = [c[0] + e[0] * math::cos(t), c[1] + e[1] * math::sin(t)];
                // Outward normal scaled by the arc-length element.
                let nrm = [e[1] * math::cos(t), e[0] * math::sin(t)];
                total += flux(&x, &nrm)?;
            }
            Ok(total * dt)
        }
        3 => {
            let (nt, np) = (nodes / 2, nodes);
            let (dt, dp) = (math::PI / nt as f64, 2.0 * math::PI / np as f64);
            let mut total = 0.0;
            for i in 0..nt {
                let th = (i as f64 + 0.5) * dt;
                let (st, ct) = (math::sin(th), math::cos(th));
                for j in 0..np {
                    let ph = j as f64 * dp;
                    let (sp, cp) = (math::sin(ph), math::cos(ph));
                    let x = [c[0] + e[0] * st * cp, c[1] + e[1] * st * sp, c[2] + e[2] * ct];
                    // γ_θ × γ_φ for the ellipsoid.
                    let nrm = [e[1] * e[2] * st * st * cp, e[0] * e[2] * st * st * sp, e[0] * e[1] * st * ct];
                    total += flux(&x, &nrm)?;
                }
            }
            Ok(total * dt * dp)
        }
        _ => Err(LabError::InvalidInput(format!("x_perimeter supports n = 2, 3, not {n}"))),
    }
}

/// Boundary nodes used by the isoperimetric suite.
pub const PERIMETER_NODES: usize = 4096;

/// Shapes of the isoperimetric sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeFamily {
    /// Balls `B(focus, ρ s)`.
    Disks,
    /// Ellipsoids with semi-axes `ρ s^{w_a}`.
    Anisotropic,
}

/// `|E|^e / P_X(E)` over shapes shrinking at the focus, `s = 1, 1/2, …,
/// 2^{-halvings}`, with `e = (ν̃−1)/ν̃` unless overridden.
pub fn isoperimetric_suite(
    ctx: &LabContext<'_>,
    exponent_override: Option<Rational>,
    shapes: ShapeFamily,
    halvings: usize,
) -> Result<InequalityReport, LabError> {
    let nu = rat(i64::from(ctx.nu_tilde));
    let e = exponent_override.unwrap_or((nu - rat(1)) / nu);
    let ef = r64(e);
    let n = ctx.sys.dim();
    let mut rep = InequalityReport::new("isoperimetric");
    rep.exponent("nu_tilde", ctx.nu_tilde);
    rep.exponent("exponent", e);
    if exponent_override.is_some() {
        rep.notes.push(format!("exponent overridden to {e}"));
    }
    let rho = fit_width(ctx.domain, &ctx.focus.point, &vec![1.0; n]);
    let mut quotients = Vec::new();
    for j in 0..=halvings {
        let s = math::pow(0.5, j as f64);
        let semi: Vec<f64> = (0..n)
            .map(|a| match shapes {
                ShapeFamily::Disks => rho * s,
                ShapeFamily::Anisotropic => rho * math::powi(s, ctx.focus.weights[a] as i32),
            })
            .collect();
        let shape = Shape { center: ctx.focus.point.clone(), semi };
        let per = x_perimeter(ctx.sys, &shape, PERIMETER_NODES)?;
        let per2 = x_perimeter(ctx.sys, &shape, 2 * PERIMETER_NODES)?;
        let quot = math::pow(shape.volume()?, ef) / per2;
        let drift = math::abs(per2 - per) / per2;
        quotients.push(quot);
        let label = match shapes {
            ShapeFamily::Disks => format!("disk(s=2^-{j})"),
            ShapeFamily::Anisotropic => format!("ellipse(s=2^-{j})"),
        };
        rep.rows.push(MemberRow { label, level: j, params: vec![("s".into(), s)], ratio: quot, drift });
    }
    rep.conclude();
    let decay = quotients[0] / quotients[quotients.len() - 1];
    let monotone = quotients.windows(2).all(|w| w[1] <= w[0]);
    rep.extras.insert("decay".into(), decay);
    rep.extras.insert("decay_monotone".into(), if monotone { 1.0 } else { 0.0 });
    Ok(rep)
}

/// Headroom applied to the Sobolev constant in the log-Sobolev check.
pub const LOG_SOBOLEV_HEADROOM: f64 = 1.05;

/// For `‖u‖_p = 1`: `(C/e) S ≥ ln(C S) ≥ (k/ν̃) ∫|u|^p ln|u|^p`,
/// `S = Σ_{|J|=k} ‖X^J u‖_p`, with `C` the empirical Sobolev constant times
/// 1.05. In the critical case `kp = ν̃` the Sobolev constant is taken at
/// `q = γp` and the right side carries the factor `1 − 1/γ`.
pub fn log_sobolev_suite(
    ctx: &LabContext<'_>,
    k: u32,
    p: Rational,
    sobolev_constant: f64,
    gamma: Option<Rational>,
    family: &[Member],
) -> Result<InequalityReport, LabError> {
    let kp = rat(i64::from(k)) * p;
    let nu = rat(i64::from(ctx.nu_tilde));
    if kp > nu {
        return Err(ExponentError::Regime(format!("requires kp <= nu_tilde (kp = {kp}, nu_tilde = {nu})")).into());
    }
    let factor = if kp == nu {
        let g = gamma.ok_or_else(|| LabError::InvalidInput("kp = nu_tilde needs gamma > 1".into()))?;
        r64(rat(i64::from(k)) / nu * (rat(1) - g.recip()))
    } else {
        r64(rat(i64::from(k)) / nu)
    };
    let c = sobolev_constant * LOG_SOBOLEV_HEADROOM;
    let pf = r64(p);
    let mut rep = InequalityReport::new("log-sobolev");
    rep.exponent("nu_tilde", ctx.nu_tilde);
    rep.exponent("k", k);
    rep.exponent("p", p);
    rep.extras.insert("C".into(), c);
    let mut violations = 0;
    for m in family {
        let exprs = order_k_exprs(ctx.sys, &m.u, k as usize)?;
        // Ratio reported per member: entropy side over the middle term; ≤ 1 when the inequality holds.
        let quantities = |s: &Sampled| -> [f64; 3] {
            let norm_p = lp_of(s, 0, pf);
            let total = math::pow(norm_p, pf);
            let d = sum_derivative_norms(s, pf) / norm_p;
            let entropy = s.integral(|r| {
                let t = math::pow(math::abs(r[0]), pf) / total;
                if t > 0.0 { t * math::ln(t) } else { 0.0 }
            });
            [c / math::E * d, math::ln(c * d), factor * entropy]
        };
        let coarse = quantities(&sample(&m.u, &exprs, ctx.plan.nodes)?);
        let fine = if ctx.plan.refine { quantities(&sample(&m.u, &exprs, 2 * ctx.plan.nodes)?) } else { coarse };
        let drift = (0..3)
            .map(|i| math::abs(fine[i] - coarse[i]) / math::abs(fine[i]).max(1e-300))
            .fold(0.0, f64::max);
        let [first, middle, entropy] = fine;
        if !(first >= middle && middle >= entropy) {
            violations += 1;
            rep.notes.push(format!("{}: {first:.6} >= {middle:.6} >= {entropy:.6} fails", m.label));
        }
        // Slack of the second inequality, measured as exp(entropy − middle).
        rep.push(m, math::exp(entropy - middle), drift.min(f64::MAX));
    }
    rep.conclude();
    rep.constant = c;
    if violations > 0 {
        rep.verdict = Verdict::Fail;
    }
    Ok(rep)
}

/// Pairs examined per member by the Hölder suite.
pub const HOLDER_PAIRS: usize = 500;

/// `([u]_α + sup|u|) / Σ_{|J|=k}‖X^J u‖_p` with `[u]_α` the largest
/// `|u(x) − u(y)| / d̂(x,y)^α` over random pairs; `α` from the embedding
/// calculator for `kp > ν̃`.
pub fn holder_suite(
    ctx: &LabContext<'_>,
    oracle: &DistanceOracle,
    k: u32,
    p: Rational,
    family: &[Member],
) -> Result<InequalityReport, LabError> {
    let (order, alpha) = match critical_exponents(ctx.nu_tilde, k, p)? {
        Embedding::Supercritical { order, alpha } => (order, alpha),
        _ => {
            return Err(ExponentError::Regime(format!(
                "requires kp > nu_tilde (kp = {}, nu_tilde = {})",
                rat(i64::from(k)) * p,
                ctx.nu_tilde
            ))
            .into())
        }
    };
    if order != 0 {
        return Err(LabError::InvalidInput(format!("Hoelder order {order}: only order 0 is checked directly")));
    }
    let af = alpha.value_or(0.5);
    let pf = r64(p);
    let mut rep = InequalityReport::new("holder");
    rep.exponent("nu_tilde", ctx.nu_tilde);
    rep.exponent("k", k);
    rep.exponent("p", p);
    match alpha {
        crate::exponents::Alpha::Exact(a) => rep.exponent("alpha", a),
        crate::exponents::Alpha::AnyInOpenUnit => rep.exponent("alpha", format!("{af} (any in (0,1))")),
    }
    let h = oracle.h();
    let mut close_pairs = 0usize;
    for (mi, m) in family.iter().enumerate() {
        let exprs = order_k_exprs(ctx.sys, &m.u, k as usize)?;
        let denom = estimate(&m.u, &exprs, ctx.plan, |s| sum_derivative_norms(s, pf))?;
        let sup = estimate(&m.u, &exprs[..1], ctx.plan, |s| (0..s.len()).map(|i| math::abs(s.row(i)[0])).fold(0.0, f64::max))?;
        let mut g = rng::stream(ctx.seed, 0x401d + mi as u64);
        let n = m.u.dim();
        let lo: Vec<f64> = (0..n).map(|a| (m.u.center[a] - 1.2 * m.u.widths[a]).max(oracle.lattice().lo[a])).collect();
        let hi: Vec<f64> = (0..n).map(|a| (m.u.center[a] + 1.2 * m.u.widths[a]).min(oracle.lattice().hi(a))).collect();
        let mut semi: f64 = 0.0;
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        for _ in 0..HOLDER_PAIRS {
            rng::uniform_in_box(&mut g, &lo, &hi, &mut x);
            rng::uniform_in_box(&mut g, &lo, &hi, &mut y);
            let (ux, uy) = (m.u.value(&x)?, m.u.value(&y)?);
            if ux == uy {
                continue;
            }
            let d = oracle.distance(&x, &y)?.0;
            if d < 4.0 * h {
                close_pairs += 1;
            }
            if d > 0.0 {
                semi = semi.max(math::abs(ux - uy) / math::pow(d, af));
            }
        }
        let ratio = (semi + sup.value) / denom.value;
        rep.push(m, ratio, denom.drift.max(sup.drift));
    }
    rep.conclude();
    if close_pairs > 0 {
        rep.notes.push(format!("oracle resolution: {close_pairs} pairs closer than 4h = {}", 4.0 * h));
    }
    Ok(rep)
}

/// `ln ∫_Ω exp(σ|u|^{ν̃/(ν̃−1)})` for `u` normalized to `‖Xu‖_{ν̃} = 1`.
/// Outside the support the integrand is 1, so the integral is
/// `|Ω| + ∫_supp expm1(σ|u|^β)`; large exponents go through log-sum-exp.
fn mt_log_integral(s: &Sampled, scale: f64, beta: f64, sigma: f64, omega: f64) -> f64 {
    let exps: Vec<f64> = (0..s.len()).map(|i| sigma * math::pow(math::abs(s.row(i)[0] * scale), beta)).collect();
    let top = exps.iter().cloned().fold(0.0, f64::max);
    if top < 600.0 {
        let extra: f64 = exps.iter().map(|&t| math::expm1(t)).sum::<f64>() * s.cell;
        return math::ln(omega + extra);
    }
    // ln(|Ω| + Σ cell·(e^t − 1)) ≈ top + ln(Σ cell·e^{t−top}) when e^top dominates.
    let sum: f64 = exps.iter().map(|&t| math::exp(t - top)).sum::<f64>() * s.cell;
    top + math::ln(sum + (omega - s.cell * s.len() as f64) * math::exp(-top))
}

/// Default multiple of `|Ω|` the exponential integral may reach.
pub const MT_MULTIPLE: f64 = 2.0;

/// Sweeps `σ` and reports the largest value for which every member keeps
/// `∫ exp(σ|u|^{ν̃/(ν̃−1)}) ≤ multiple·|Ω|`.
pub fn moser_trudinger_suite(
    ctx: &LabContext<'_>,
    sigmas: &[f64],
    multiple: f64,
    omega_volume: f64,
    family: &[Member],
) -> Result<InequalityReport, LabError> {
    let nu = f64::from(ctx.nu_tilde);
    let beta = nu / (nu - 1.0);
    let mut rep = InequalityReport::new("moser-trudinger");
    rep.exponent("nu_tilde", ctx.nu_tilde);
    rep.exponent("beta", Rational::new(i64::from(ctx.nu_tilde), i64::from(ctx.nu_tilde) - 1));
    rep.extras.insert("multiple".into(), multiple);
    rep.extras.insert("omega_volume".into(), omega_volume);
    let bound = math::ln(multiple * omega_volume);
    let mut sorted = sigmas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sigma_ok = f64::INFINITY;
    for m in family {
        let exprs = order_k_exprs(ctx.sys, &m.u, 1)?;
        let mut best_for_member = 0.0;
        let mut drift: f64 = 0.0;
        let mut ln_at_min = f64::NAN;
        for &sigma in &sorted {
            let q = |s: &Sampled| {
                let g = math::pow(gradient_power(s, nu), 1.0 / nu);
                let scale = if g > 0.0 { 1.0 / g } else { 0.0 };
                mt_log_integral(s, scale, beta, sigma, omega_volume)
            };
            let e = estimate(&m.u, &exprs, ctx.plan, q)?;
            drift = drift.max(e.drift);
            if ln_at_min.is_nan() {
                ln_at_min = e.value;
            }
            if e.value <= bound {
                best_for_member = sigma;
            } else {
                break;
            }
        }
        sigma_ok = sigma_ok.min(best_for_member);
        // Per-member ratio: integral over |Ω| at the smallest swept σ.
        rep.push(m, math::exp(ln_at_min) / omega_volume, drift);
    }
    rep.conclude();
    rep.extras.insert("sigma_max".into(), if sigma_ok.is_finite() { sigma_ok } else { 0.0 });
    if !(sigma_ok > 0.0) {
        rep.verdict = Verdict::Fail;
        rep.notes.push("no swept sigma keeps the integral below the bound".into());
    } else {
        rep.notes.push(format!("largest admissible swept sigma: {sigma_ok}"));
    }
    Ok(rep)
}

/// `‖u‖_p^p / ‖Xu‖_p^p` with `|Xu|` the Euclidean norm of the X-gradient.
pub fn poincare_check(ctx: &LabContext<'_>, p: f64, family: &[Member]) -> Result<InequalityReport, LabError> {
    if !(p >= 1.0) {
        return Err(LabError::InvalidInput(format!("p = {p} < 1")));
    }
    let mut rep = InequalityReport::new("poincare");
    rep.exponent("p", format!("{p}"));
    for m in family {
        let exprs = order_k_exprs(ctx.sys, &m.u, 1)?;
        let e = estimate(&m.u, &exprs, ctx.plan, |s| {
            s.integral(|r| math::pow(math::abs(r[0]), p)) / gradient_power(s, p)
        })?;
        if e.value.is_nan() || e.value == 0.0 {
            continue;
        }
        rep.push(m, e.value, e.drift);
    }
    if rep.rows.is_empty() {
        return Err(LabError::EmptyFamily);
    }
    rep.conclude();
    Ok(rep)
}

/// Evaluation points per member in the representation check.
pub const REPRESENTATION_POINTS: usize = 50;

/// `|u(x)| ≤ C ∫ d̂(x,y)/|B(x,d̂(x,y))| (|Xu| + |u|)(y) dy` at sampled
/// points. Ball volumes are counted on the oracle lattice from the same
/// distance field; below two cells they follow `Λ(x,ρ)` matched at two
/// cells. Members narrower than four cells are not resolved by the oracle
/// and are skipped.
pub fn representation_check(
    ctx: &LabContext<'_>,
    oracle: &DistanceOracle,
    basis: &CommutatorBasis,
    family: &[Member],
) -> Result<InequalityReport, LabError> {
    let mut rep = InequalityReport::new("representation");
    let cellv = oracle.lattice().cell_volume();
    let h = oracle.h();
    let mut skipped = 0;
    for (mi, m) in family.iter().enumerate() {
        if m.u.widths.iter().any(|&w| w < 4.0 * h) {
            skipped += 1;
            continue;
        }
        let exprs = order_k_exprs(ctx.sys, &m.u, 1)?;
        let s = sample(&m.u, &exprs, ctx.plan.nodes)?;
        let density: Vec<f64> = (0..s.len())
            .map(|i| {
                let r = s.row(i);
                math::sqrt(r[1..].iter().map(|v| v * v).sum::<f64>()) + math::abs(r[0])
            })
            .collect();
        let mut g = rng::stream(ctx.seed, 0x4e9 + mi as u64);
        let n = m.u.dim();
        let lo: Vec<f64> = (0..n).map(|a| m.u.center[a] - 0.7 * m.u.widths[a]).collect();
        let hi: Vec<f64> = (0..n).map(|a| m.u.center[a] + 0.7 * m.u.widths[a]).collect();
        let mut worst: f64 = 0.0;
        let mut x = vec![0.0; n];
        let mut taken = 0;
        let mut tries = 0;
        while taken < REPRESENTATION_POINTS && tries < 20 * REPRESENTATION_POINTS {
            tries += 1;
            rng::uniform_in_box(&mut g, &lo, &hi, &mut x);
            let ux = m.u.value(&x)?;
            if ux == 0.0 {
                continue;
            }
            taken += 1;
            let field = oracle.field_from(&x)?;
            let mut reach: Vec<f64> = field.dist.iter().cloned().filter(|d| d.is_finite()).collect();
            reach.sort_by(f64::total_cmp);
            let vol = LatticeVolume::new(&reach, cellv, basis.lambda_profile(&x)?, 2.0 * h);
            let mut rhs = 0.0;
            for i in 0..s.len() {
                let d = oracle.interpolate(&field, s.point(i));
                if !(d > 0.0) || !d.is_finite() {
                    continue;
                }
                rhs += d / vol.eval(d) * density[i];
            }
            rhs *= s.cell;
            if rhs > 0.0 {
                worst = worst.max(math::abs(ux) / rhs);
            }
        }
        rep.push(m, worst, 0.0);
    }
    if rep.rows.is_empty() {
        return Err(LabError::EmptyFamily);
    }
    rep.conclude();
    if skipped > 0 {
        rep.notes.push(format!("{skipped} members narrower than 4h = {} skipped", 4.0 * h));
    }
    Ok(rep)
}

/// `|B(x,ρ)| ≈ cell · #{d < ρ}` on the lattice, continued below
/// `resolution` by `Λ(x,ρ)` scaled to agree at `resolution`.
struct LatticeVolume {
    table: VolumeProfile,
    lambda: crate::lie::LambdaProfile,
    v_res: f64,
    l_res: f64,
}

impl LatticeVolume {
    fn new(sorted: &[f64], cell: f64, lambda: crate::lie::LambdaProfile, resolution: f64) -> LatticeVolume {
        let top = sorted.last().cloned().unwrap_or(1.0).max(resolution * 2.0);
        let radii = geometric_radii(resolution, top, 32);
        let volumes: Vec<f64> =
            radii.iter().map(|&r| (sorted.partition_point(|&d| d < r) as f64).max(1.0) * cell).collect();
        let v_res = volumes[0];
        let l_res = lambda.eval(resolution);
        let table = VolumeProfile { center: Vec::new(), radii, volumes, nu: 0.0, resolution };
        LatticeVolume { table, lambda, v_res, l_res }
    }

    fn eval(&self, rho: f64) -> f64 {
        if rho >= self.table.resolution || !(self.l_res > 0.0) {
            return self.table.eval(rho.max(self.table.resolution));
        }
        self.v_res * self.lambda.eval(rho) / self.l_res
    }
}

/// `min ∫|Xu|^ν̃ / ∫|u|^ν̃` over the family: an upper bound on the first
/// eigenvalue of the `ν̃`-Laplacian. `u` is divided by its largest sampled
/// magnitude first, so the quotient does not see `u → cu`.
pub fn rayleigh_bound(ctx: &LabContext<'_>, family: &[Member]) -> Result<f64, LabError> {
    let nu = f64::from(ctx.nu_tilde);
    let mut best = f64::INFINITY;
    for m in family {
        let exprs = order_k_exprs(ctx.sys, &m.u, 1)?;
        let s = sample(&m.u, &exprs, ctx.plan.nodes)?;
        let top = (0..s.len()).map(|i| math::abs(s.row(i)[0])).fold(0.0, f64::max);
        if top == 0.0 {
            continue;
        }
        let num = s.integral(|r| {
            let g2: f64 = r[1..].iter().map(|v| (v / top) * (v / top)).sum();
            math::pow(g2, 0.5 * nu)
        });
        let den = s.integral(|r| math::pow(math::abs(r[0] / top), nu));
        best = best.min(num / den);
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(LabError::EmptyFamily)
    }
}

/// `|Ω|` by midpoint counting on the domain box (`nodes` per axis).
pub fn domain_volume(domain: &DomainSpec, nodes: usize) -> f64 {
    if domain.indicator.is_none() {
        return domain.box_volume();
    }
    let n = domain.dim();
    let step: Vec<f64> = (0..n).map(|a| (domain.hi[a] - domain.lo[a]) / nodes as f64).collect();
    let mut x = vec![0.0; n];
    let mut count = 0usize;
    for idx in 0..nodes.pow(n as u32) {
        let mut rest = idx;
        for a in 0..n {
            x[a] = domain.lo[a] + ((rest % nodes) as f64 + 0.5) * step[a];
            rest /= nodes;
        }
        if domain.contains(&x) {
            count += 1;
        }
    }
    count as f64 * step.iter().product::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_count() {
        assert_eq!(multi_indices(3, 2).len(), 9);
        assert_eq!(multi_indices(2, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn zero_function_norm() {
        let u = TestFunction::bump(&[0.0, 0.0], &[0.5, 0.5], Profile::Standard).scale(0.0);
        assert_eq!(lp_norm(&u, 2.0, QuadPlan::with_nodes(17)).unwrap().value, 0.0);
    }

    #[test]
    fn shape_volumes() {
        let s = Shape { center: vec![0.0, 0.0], semi: vec![2.0, 0.5] };
        assert!((s.volume().unwrap() - math::PI).abs() < 1e-15);
    }
}
