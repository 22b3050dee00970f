//! Iterated commutators, the determinants `λ_I`, the polynomial
//! `Λ(x,r) = Σ_I |λ_I(x)| r^{d(I)}` and the homogeneous-dimension indices
//! derived from it.
//!
//! Tuples with a repeated entry have a zero determinant, so every sum over
//! ordered `n`-tuples is computed as `n!` times a sum over `n`-subsets of the
//! basis. Subsets are enumerated depth first with an incremental
//! Gram–Schmidt factorization; a partial subset whose volume is already
//! numerically zero is pruned together with all its extensions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{EvalError, Expr, Program};
use crate::linalg;
use crate::math;
use crate::system::{DomainSpec, VectorField, VectorFieldSystem};

/// Default relative threshold of the determinant zero test.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;
/// Default cap on the total expression size of an enumerated basis.
pub const DEFAULT_NODE_CAP: usize = 4_000_000;
/// Default cap on determinant evaluations per point.
pub const DEFAULT_TUPLE_CAP: u64 = 10_000_000;
/// Largest depth tried when the system does not declare its step.
pub const DEFAULT_STEP_CAP: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub enum LieError {
    DimensionMismatch { left: usize, right: usize },
    BudgetExceeded { what: &'static str, needed: u64, cap: u64 },
    InvalidIndex(usize),
    WrongTupleLength { expected: usize, found: usize },
    Eval(EvalError),
    NoSpanningTuple { point: Vec<f64> },
    NotHormander { depth: usize, point: Vec<f64> },
    EmptySample,
}

impl fmt::Display for LieError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LieError::DimensionMismatch { left, right } => {
                write!(f, "vector fields live in different dimensions ({left} vs {right})")
            }
            LieError::BudgetExceeded { what, needed, cap } => write!(
                f,
                "{what} budget exceeded ({needed} > {cap}); lower the bracket depth"
            ),
            LieError::InvalidIndex(i) => write!(f, "basis index {i} out of range"),
            LieError::WrongTupleLength { expected, found } => {
                write!(f, "tuple has {found} entries, expected {expected}")
            }
            LieError::Eval(e) => write!(f, "{e}"),
            LieError::NoSpanningTuple { point } => write!(
                f,
                "no spanning tuple at {point:?}: the bracket condition fails numerically at the enumerated depth"
            ),
            LieError::NotHormander { depth, point } => write!(
                f,
                "brackets up to length {depth} do not span at {point:?}"
            ),
            LieError::EmptySample => f.write_str("the sampling plan produced no points in the domain"),
        }
    }
}

impl core::error::Error for LieError {}

impl From<EvalError> for LieError {
    fn from(e: EvalError) -> LieError {
        LieError::Eval(e)
    }
}

/// `[A, B]_k = Σ_i (A_i ∂_i B_k − B_i ∂_i A_k)`.
pub fn lie_bracket(a: &VectorField, b: &VectorField) -> Result<VectorField, LieError> {
    if a.dim() != b.dim() {
        return Err(LieError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let n = a.dim();
    let coeffs = (0..n)
        .map(|k| {
            let mut acc = Expr::zero();
            for i in 0..n {
                acc = Expr::add(acc, Expr::mul(a.coeffs[i].clone(), b.coeffs[k].derivative(i)));
                acc = Expr::sub(acc, Expr::mul(b.coeffs[i].clone(), a.coeffs[k].derivative(i)));
            }
            acc
        })
        .collect();
    Ok(VectorField::new(coeffs))
}

#[derive(Clone, Debug)]
pub struct BasisEntry {
    pub field: VectorField,
    pub degree: usize,
    /// 0-based generating multi-index `(j1, …, jk)` of `[X_j1,[X_j2,…,X_jk]]`.
    pub multi: Vec<usize>,
}

impl BasisEntry {
    pub fn label(&self) -> String {
        fn nest(m: &[usize]) -> String {
            if m.len() == 1 {
                format!("X{}", m[0] + 1)
            } else {
                format!("[X{},{}]", m[0] + 1, nest(&m[1..]))
            }
        }
        nest(&self.multi)
    }
}

/// All nested brackets of the generators up to a given length.
#[derive(Clone, Debug)]
pub struct CommutatorBasis {
    n: usize,
    m: usize,
    s0: usize,
    entries: Vec<BasisEntry>,
    program: Program,
}

/// Enumerates `X_J = [X_{j1},[X_{j2},…]]` for all `|J| ≤ max_len`, ordered by
/// length and then lexicographically by `J`.
pub fn enumerate_commutators(
    sys: &VectorFieldSystem,
    max_len: usize,
    node_cap: usize,
) -> Result<CommutatorBasis, LieError> {
    let n = sys.dim();
    let m = sys.count();
    let max_len = max_len.max(1);
    let mut total: u64 = 0;
    for k in 1..=max_len {
        total = total.saturating_add((m as u64).saturating_pow(k as u32));
    }
    if total.saturating_mul(n as u64) > node_cap as u64 {
        return Err(LieError::BudgetExceeded {
            what: "expression node",
            needed: total.saturating_mul(n as u64),
            cap: node_cap as u64,
        });
    }
    let mut entries: Vec<BasisEntry> = sys
        .fields()
        .iter()
        .enumerate()
        .map(|(j, f)| BasisEntry { field: f.clone(), degree: 1, multi: vec![j] })
        .collect();
    let mut prev_start = 0;
    let mut nodes: usize = entries.iter().map(|e| field_size(&e.field)).sum();
    for k in 2..=max_len {
        let prev_end = entries.len();
        for j in 0..m {
            for p in prev_start..prev_end {
                let field = lie_bracket(sys.field(j), &entries[p].field)?;
                nodes = nodes.saturating_add(field_size(&field));
                if nodes > node_cap {
                    return Err(LieError::BudgetExceeded {
                        what: "expression node",
                        needed: nodes as u64,
                        cap: node_cap as u64,
                    });
                }
                let mut multi = vec![j];
                multi.extend_from_slice(&entries[p].multi);
                entries.push(BasisEntry { field, degree: k, multi });
            }
        }
        prev_start = prev_end;
    }
    let all: Vec<Expr> = entries.iter().flat_map(|e| e.field.coeffs.iter().cloned()).collect();
    let program = Program::compile(&all);
    Ok(CommutatorBasis { n, m, s0: max_len, entries, program })
}

fn field_size(f: &VectorField) -> usize {
    f.coeffs.iter().map(Expr::dag_size).sum()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl CommutatorBasis {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> usize {
        self.m
    }

    pub fn s0(&self) -> usize {
        self.s0
    }

    pub fn entries(&self) -> &[BasisEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.entries[i].degree
    }

    /// Evaluates every entry at `x`; row `i` of the `l × n` output is `Y_i(x)`.
    pub fn eval_columns(
        &self,
        x: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), LieError> {
        self.program.eval_into(x, scratch, out)?;
        Ok(())
    }

    pub fn columns(&self, x: &[f64]) -> Result<Vec<f64>, LieError> {
        let mut out = vec![0.0; self.entries.len() * self.n];
        self.eval_columns(x, &mut Vec::new(), &mut out)?;
        Ok(out)
    }

    /// `λ_I(x) = det(Y_{i1}(x), …, Y_{in}(x))`.
    ///
    /// The columns are sorted before elimination and the permutation sign is
    /// applied afterwards, so permuting `I` changes the result by the sign
    /// only, bit for bit.
    pub fn lambda_det(&self, tuple: &[usize], x: &[f64]) -> Result<f64, LieError> {
        if tuple.len() != self.n {
            return Err(LieError::WrongTupleLength { expected: self.n, found: tuple.len() });
        }
        if let Some(&bad) = tuple.iter().find(|&&i| i >= self.entries.len()) {
            return Err(LieError::InvalidIndex(bad));
        }
        let mut idx = tuple.to_vec();
        let mut sign = 1.0;
        for a in 0..idx.len() {
            for b in 0..idx.len() - 1 - a {
                if idx[b] > idx[b + 1] {
                    idx.swap(b, b + 1);
                    sign = -sign;
                }
            }
        }
        if idx.windows(2).any(|w| w[0] == w[1]) {
            return Ok(0.0);
        }
        let cols: Vec<Vec<f64>> =
            idx.iter().map(|&i| self.entries[i].field.evaluate(x)).collect::<Result<_, _>>()?;
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        Ok(sign * linalg::det_columns(&refs))
    }

    /// `d(I)`, the sum of the formal degrees of the tuple entries.
    pub fn tuple_degree(&self, tuple: &[usize]) -> usize {
        tuple.iter().map(|&i| self.entries[i].degree).sum()
    }

    pub fn max_tuple_degree(&self) -> usize {
        let mut degs: Vec<usize> = self.entries.iter().map(|e| e.degree).collect();
        degs.sort_unstable_by(|a, b| b.cmp(a));
        degs.iter().take(self.n).sum()
    }

    /// Number of `n`-subsets visited at most per point.
    pub fn subset_count(&self) -> u64 {
        let (l, n) = (self.entries.len() as u64, self.n as u64);
        if n > l {
            return 0;
        }
        let mut c: u64 = 1;
        for i in 0..n {
            c = c.saturating_mul(l - i) / (i + 1);
        }
        c
    }

    /// Full determinant analysis at one point.
    pub fn analyze_point(&self, x: &[f64], tol: f64) -> Result<PointAnalysis, LieError> {
        let mut ws = Workspace::default();
        self.analyze_point_with(x, tol, &mut ws)
    }

    pub fn analyze_point_with(
        &self,
        x: &[f64],
        tol: f64,
        ws: &mut Workspace,
    ) -> Result<PointAnalysis, LieError> {
        let needed = self.subset_count();
        if needed > DEFAULT_TUPLE_CAP {
            return Err(LieError::BudgetExceeded { what: "tuple", needed, cap: DEFAULT_TUPLE_CAP });
        }
        let (l, n) = (self.entries.len(), self.n);
        ws.cols.resize(l * n, 0.0);
        self.program.eval_into(x, &mut ws.scratch, &mut ws.cols)?;
        ws.norms.clear();
        ws.norms.extend((0..l).map(|i| math::norm2(&ws.cols[i * n..(i + 1) * n])));
        let max_degree = self.max_tuple_degree();
        let mut out = PointAnalysis {
            point: x.to_vec(),
            nu: None,
            step: None,
            nu_witness: Vec::new(),
            coeffs: vec![0.0; max_degree + 1],
            passing_degrees: Vec::new(),
            max_passing: None,
        };
        let mut dfs = Dfs {
            basis: self,
            tol,
            cols: &ws.cols,
            norms: &ws.norms,
            q: Vec::new(),
            chosen: Vec::new(),
            residual: Vec::new(),
            out: &mut out,
        };
        dfs.run(0, 1.0, 1.0, 0, 0);
        let nf = factorial(n);
        for c in out.coeffs.iter_mut() {
            *c *= nf;
        }
        out.passing_degrees.sort_unstable();
        out.passing_degrees.dedup();
        Ok(out)
    }

    /// `ν(x)`: the smallest `d(I)` with `λ_I(x)` numerically nonzero.
    pub fn pointwise_nu(&self, x: &[f64], tol: f64) -> Result<usize, LieError> {
        self.analyze_point(x, tol)?.nu.ok_or_else(|| LieError::NoSpanningTuple { point: x.to_vec() })
    }

    /// `Λ(x, r)`, summed over ordered tuples.
    pub fn nsw_polynomial(&self, x: &[f64], r: f64) -> Result<f64, LieError> {
        Ok(self.lambda_profile(x)?.eval(r))
    }

    /// The coefficients of `Λ(x, ·)` by degree, with every nonzero determinant
    /// included (no zero threshold).
    pub fn lambda_profile(&self, x: &[f64]) -> Result<LambdaProfile, LieError> {
        let a = self.analyze_point(x, 0.0)?;
        Ok(LambdaProfile { coeffs: a.coeffs })
    }
}

/// Scratch buffers reused across points.
#[derive(Default, Debug)]
pub struct Workspace {
    scratch: Vec<f64>,
    cols: Vec<f64>,
    norms: Vec<f64>,
}

/// Determinant summary at one point.
#[derive(Clone, Debug)]
pub struct PointAnalysis {
    pub point: Vec<f64>,
    /// `ν(x)`; `None` when no tuple passes the zero test.
    pub nu: Option<usize>,
    /// Smallest bracket length needed to span at `x`.
    pub step: Option<usize>,
    /// A subset (basis indices) attaining `ν(x)`.
    pub nu_witness: Vec<usize>,
    /// `coeffs[d] = Σ_{d(I)=d} |λ_I(x)|` over ordered tuples passing the zero test.
    pub coeffs: Vec<f64>,
    /// Distinct `d(I)` values of the passing subsets.
    pub passing_degrees: Vec<usize>,
    /// Largest passing `d(I)` and a subset attaining it.
    pub max_passing: Option<(usize, Vec<usize>)>,
}

impl PointAnalysis {
    pub fn profile(&self) -> LambdaProfile {
        LambdaProfile { coeffs: self.coeffs.clone() }
    }
}

struct Dfs<'a> {
    basis: &'a CommutatorBasis,
    tol: f64,
    cols: &'a [f64],
    norms: &'a [f64],
    q: Vec<Vec<f64>>,
    chosen: Vec<usize>,
    residual: Vec<f64>,
    out: &'a mut PointAnalysis,
}

impl Dfs<'_> {
    fn run(&mut self, start: usize, volume: f64, ratio: f64, degree: usize, max_deg: usize) {
        let n = self.basis.n;
        let depth = self.chosen.len();
        if depth == n {
            self.record(volume, degree, max_deg);
            return;
        }
        let l = self.basis.entries.len();
        if l < start + (n - depth) {
            return;
        }
        for i in start..=(l - (n - depth)) {
            let norm = self.norms[i];
            if norm == 0.0 {
                continue;
            }
            let col = &self.cols[i * n..(i + 1) * n];
            let mut resid = core::mem::take(&mut self.residual);
            let r = linalg::orthogonal_residual(&self.q, col, &mut resid);
            let new_ratio = ratio * (r / norm);
            if r == 0.0 || new_ratio <= self.tol {
                self.residual = resid;
                continue;
            }
            let d = self.basis.entries[i].degree;
            self.q.push(resid.clone());
            self.chosen.push(i);
            self.residual = resid;
            self.run(i + 1, volume * r, new_ratio, degree + d, max_deg.max(d));
            self.chosen.pop();
            self.q.pop();
        }
    }

    fn record(&mut self, volume: f64, degree: usize, max_deg: usize) {
        let out = &mut *self.out;
        out.coeffs[degree] += volume;
        if out.nu.is_none_or(|v| degree < v) {
            out.nu = Some(degree);
            out.nu_witness = self.chosen.clone();
        }
        if out.step.is_none_or(|s| max_deg < s) {
            out.step = Some(max_deg);
        }
        out.passing_degrees.push(degree);
        if out.max_passing.as_ref().is_none_or(|(d, _)| degree > *d) {
            out.max_passing = Some((degree, self.chosen.clone()));
        }
    }
}

/// `Λ(x, r) = Σ_d c_d r^d` at a fixed point.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaProfile {
    pub coeffs: Vec<f64>,
}

impl LambdaProfile {
    pub fn eval(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * r + c;
        }
        acc
    }

    /// `ln Λ(x, e^t)` evaluated without underflow.
    pub fn ln_eval(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0.0)
            .map(|(d, c)| math::ln(*c) + d as f64 * t)
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + math::ln(terms.iter().map(|v| math::exp(v - m)).sum())
    }

    /// Lowest degree with a nonzero coefficient.
    pub fn order(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| *c > 0.0)
    }

    /// Least-squares slope of `ln Λ` against `ln r` on `points` geometric
    /// radii in `[r_lo, r_hi]`.
    pub fn slope_on(&self, r_lo: f64, r_hi: f64, points: usize) -> f64 {
        let (a, b) = (math::ln(r_lo), math::ln(r_hi));
        let k = points.max(2);
        let ts: Vec<f64> = (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| self.ln_eval(t)).collect();
        math::slope(&ts, &ys)
    }

    /// Slope of `ln Λ` in the limit `r → 0`: decade-wise slopes are taken
    /// from `r = 1e-2` downwards until two successive ones agree to `1e-3`.
    pub fn small_r_slope(&self) -> f64 {
        let step = math::ln(10.0);
        let mut t = math::ln(1e-2);
        let mut prev = f64::NAN;
        for _ in 0..2000 {
            let s = (self.ln_eval(t) - self.ln_eval(t - step)) / step;
            if math::abs(s - prev) < 1e-3 {
                return s;
            }
            prev = s;
            t -= step;
        }
        prev
    }
}

/// Points at which the indices are sampled.
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    /// Grid nodes per axis, endpoints included.
    pub grid_per_axis: usize,
    /// Extra points, typically known or suspected singular points.
    pub suspect_points: Vec<Vec<f64>>,
    /// Add the coordinate hyperplanes `{x_i = 0}` for polynomial systems.
    pub hyperplanes: bool,
    pub tol: f64,
}

impl Default for SamplingPlan {
    fn default() -> SamplingPlan {
        SamplingPlan { grid_per_axis: 33, suspect_points: Vec::new(), hyperplanes: true, tol: DEFAULT_ZERO_TOL }
    }
}

impl SamplingPlan {
    pub fn with_grid(grid_per_axis: usize) -> SamplingPlan {
        SamplingPlan { grid_per_axis, ..SamplingPlan::default() }
    }

    /// Grid points (box boundary included), hyperplane points and suspect
    /// points, restricted to the closure of the domain.
    pub fn points(&self, domain: &DomainSpec, polynomial: bool) -> Vec<Vec<f64>> {
        let n = domain.dim();
        let g = self.grid_per_axis.max(2);
        let axis = |i: usize, k: usize| {
            if k + 1 == g {
                domain.hi[i]
            } else {
                domain.lo[i] + (domain.hi[i] - domain.lo[i]) * k as f64 / (g - 1) as f64
            }
        };
        let mut pts = Vec::new();
        let mut idx = vec![0usize; n];
        loop {
            let p: Vec<f64> = (0..n).map(|i| axis(i, idx[i])).collect();
            if domain.contains_closed(&p) {
                pts.push(p);
            }
            if !advance(&mut idx, g) {
                break;
            }
        }
        if self.hyperplanes && polynomial {
            for plane in 0..n {
                if !(domain.lo[plane] < 0.0 && domain.hi[plane] > 0.0) {
                    continue;
                }
                let zero_on_grid = (0..g).any(|k| axis(plane, k) == 0.0);
                if zero_on_grid {
                    continue;
                }
                let mut idx = vec![0usize; n];
                loop {
                    if idx[plane] == 0 {
                        let p: Vec<f64> =
                            (0..n).map(|i| if i == plane { 0.0 } else { axis(i, idx[i]) }).collect();
                        if domain.contains_closed(&p) {
                            pts.push(p);
                        }
                    }
                    if !advance(&mut idx, g) {
                        break;
                    }
                }
            }
        }
        for p in &self.suspect_points {
            if p.len() == n && domain.contains_closed(p) {
                pts.push(p.clone());
            }
        }
        pts
    }
}

fn advance(idx: &mut [usize], g: usize) -> bool {
    for v in idx.iter_mut() {
        *v += 1;
        if *v < g {
            return true;
        }
        *v = 0;
    }
    false
}

/// A point together with the basis indices of a tuple.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Witness {
    pub point: Vec<f64>,
    pub tuple: Vec<usize>,
    pub labels: Vec<String>,
    pub degree: usize,
}

/// Sampled `ν(x)`, `ν̃`, `Q` and the bracket step.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IndexReport {
    pub nu_pointwise: Vec<(Vec<f64>, usize)>,
    pub nu_tilde: usize,
    pub q: usize,
    pub s_max: usize,
    pub singular_points: Vec<Vec<f64>>,
    pub nu_tilde_witness: Witness,
    pub q_witness: Witness,
    pub sample_count: usize,
}

impl IndexReport {
    pub fn nu_min(&self) -> usize {
        self.nu_pointwise.iter().map(|(_, v)| *v).min().unwrap_or(0)
    }
}

fn witness(basis: &CommutatorBasis, point: &[f64], tuple: &[usize]) -> Witness {
    Witness {
        point: point.to_vec(),
        tuple: tuple.to_vec(),
        labels: tuple.iter().map(|&i| basis.entries[i].label()).collect(),
        degree: basis.tuple_degree(tuple),
    }
}

/// `ν̃ = max ν(x)` and `Q = max{d(I) : λ_I ≠ 0 somewhere}` over the sample.
pub fn metivier_index(
    basis: &CommutatorBasis,
    domain: &DomainSpec,
    plan: &SamplingPlan,
    polynomial: bool,
) -> Result<IndexReport, LieError> {
    let pts = plan.points(domain, polynomial);
    if pts.is_empty() {
        return Err(LieError::EmptySample);
    }
    let mut ws = Workspace::default();
    let mut nu_pointwise = Vec::with_capacity(pts.len());
    let mut nu_best: Option<(usize, Witness)> = None;
    let mut q_best: Option<(usize, Witness)> = None;
    let mut s_max = 0;
    for p in &pts {
        let a = basis.analyze_point_with(p, plan.tol, &mut ws)?;
        let nu = a.nu.ok_or_else(|| LieError::NoSpanningTuple { point: p.clone() })?;
        s_max = s_max.max(a.step.unwrap_or(0));
        if nu_best.as_ref().is_none_or(|(v, _)| nu > *v) {
            nu_best = Some((nu, witness(basis, p, &a.nu_witness)));
        }
        if let Some((d, t)) = &a.max_passing {
            if q_best.as_ref().is_none_or(|(v, _)| *d > *v) {
                q_best = Some((*d, witness(basis, p, t)));
            }
        }
        nu_pointwise.push((p.clone(), nu));
    }
    let (nu_tilde, nu_w) = nu_best.ok_or(LieError::EmptySample)?;
    let (q, q_w) = q_best.ok_or(LieError::EmptySample)?;
    let nu_min = nu_pointwise.iter().map(|(_, v)| *v).min().unwrap_or(nu_tilde);
    let singular_points =
        nu_pointwise.iter().filter(|(_, v)| *v > nu_min).map(|(p, _)| p.clone()).collect();
    debug_assert!(nu_tilde <= q);
    Ok(IndexReport {
        nu_pointwise,
        nu_tilde,
        q,
        s_max,
        singular_points,
        nu_tilde_witness: nu_w,
        q_witness: q_w,
        sample_count: pts.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct HormanderReport {
    pub holds: bool,
    /// Largest spanning depth over the sample, when the condition holds.
    pub s_max: Option<usize>,
    /// A sampled point where the enumerated brackets fail to span.
    pub witness: Option<Vec<f64>>,
}

/// Checks that the enumerated brackets span at every sampled point.
pub fn hormander_check(
    basis: &CommutatorBasis,
    domain: &DomainSpec,
    plan: &SamplingPlan,
    polynomial: bool,
) -> Result<HormanderReport, LieError> {
    let mut ws = Workspace::default();
    let mut s_max = 0;
    for p in plan.points(domain, polynomial) {
        let a = basis.analyze_point_with(&p, plan.tol, &mut ws)?;
        match a.step {
            Some(s) => s_max = s_max.max(s),
            None => return Ok(HormanderReport { holds: false, s_max: None, witness: Some(p) }),
        }
    }
    Ok(HormanderReport { holds: true, s_max: Some(s_max), witness: None })
}

/// Uses the declared step when present; otherwise increases the bracket
/// depth until the brackets span on the whole sample, up to `cap`.
pub fn discover_basis(
    sys: &VectorFieldSystem,
    domain: &DomainSpec,
    plan: &SamplingPlan,
    cap: usize,
) -> Result<(CommutatorBasis, HormanderReport), LieError> {
    let poly = sys.is_polynomial();
    if let Some(step) = sys.step_hint() {
        let basis = enumerate_commutators(sys, step, DEFAULT_NODE_CAP)?;
        let rep = hormander_check(&basis, domain, plan, poly)?;
        return Ok((basis, rep));
    }
    let mut last = None;
    for depth in 1..=cap.max(1) {
        let basis = enumerate_commutators(sys, depth, DEFAULT_NODE_CAP)?;
        let rep = hormander_check(&basis, domain, plan, poly)?;
        if rep.holds {
            return Ok((basis, rep));
        }
        last = rep.witness;
    }
    Err(LieError::NotHormander { depth: cap, point: last.unwrap_or_default() })
}

/// Groups the sampled `ν` values: `(ν, count)` in increasing order.
pub fn nu_histogram(report: &IndexReport) -> Vec<(usize, usize)> {
    let mut h = BTreeMap::new();
    for (_, v) in &report.nu_pointwise {
        *h.entry(*v).or_insert(0usize) += 1;
    }
    h.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_system;

    #[test]
    fn lambda_profile_evaluation() {
        let p = LambdaProfile { coeffs: vec![0.0, 0.0, 2.0, 1.0] };
        assert_eq!(p.eval(0.5), 2.0 * 0.25 + 0.125);
        assert!((p.ln_eval(math::ln(0.5)) - math::ln(0.625)).abs() < 1e-14);
        assert_eq!(p.order(), Some(2));
        assert!((p.small_r_slope() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn euclid_lambda_is_two_r_squared() {
        let sys = parse_system("dim 2; X1 = D1; X2 = D2").unwrap();
        let b = enumerate_commutators(&sys, 1, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(b.nsw_polynomial(&[0.3, 0.1], 0.5).unwrap(), 0.5);
    }

    #[test]
    fn budget_is_enforced() {
        let sys = parse_system("dim 2; X1 = D1; X2 = x1*D2; X3 = D2").unwrap();
        let err = enumerate_commutators(&sys, 12, 1000).unwrap_err();
        assert!(matches!(err, LieError::BudgetExceeded { .. }));
    }
}
