//! Lattice approximation of the control distance
//! `d(x,y) = inf{δ : x, y joined by a path with φ' = Σ a_j X_j(φ), Σ a_j² ≤ δ²}`.
//!
//! Nodes sit on a box lattice (spacing may differ per axis). From each node
//! the flow of `Σ a_j X_j` with constant control is integrated for unit time
//! (RK4) along a fan of control directions and magnitudes; each landing point
//! is snapped to its nearest node and the control is then refined by
//! Levenberg–Marquardt so the segment ends on that node as closely as the
//! fields allow. The edge weight is the refined control norm `|a|`, which is
//! the `δ`-cost of a unit-time segment. Reversing a segment costs the same,
//! so the graph is undirected.
//!
//! Off-lattice query points are linked to the nodes within two cells by the
//! same control solve. Shortest paths can be shortened afterwards by
//! replacing runs of segments with single exact segments.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use rand::Rng;

use crate::expr::Program;
use crate::lie::{CommutatorBasis, LieError};
use crate::linalg;
use crate::math;
use crate::rng;
use crate::system::{DomainSpec, VectorFieldSystem};

const UNREACHED: u32 = u32::MAX;
const FROM_SOURCE: u32 = u32::MAX - 1;
/// Scaled residual below which a segment is treated as landing exactly.
const EXACT_RESIDUAL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum MetricError {
    DomainTooSmall,
    TooCoarse { axis: usize, nodes: usize },
    OutsideDomain(Vec<f64>),
    ResolutionInsufficient,
    BallEscapesDomain { center: Vec<f64>, r: f64 },
    InvalidRadius(f64),
    Lie(LieError),
    Budget { nodes: u64, cap: u64 },
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::DomainTooSmall => f.write_str("domain box is degenerate"),
            MetricError::TooCoarse { axis, nodes } => write!(
                f,
                "h too coarse: axis {} has {nodes} nodes, at least 8 are required",
                axis + 1
            ),
            MetricError::OutsideDomain(p) => write!(f, "point {p:?} lies outside the oracle box"),
            MetricError::ResolutionInsufficient => {
                f.write_str("resolution insufficient: the points are not connected in the graph")
            }
            MetricError::BallEscapesDomain { center, r } => {
                write!(f, "ball B({center:?}, {r}) is not contained in the domain")
            }
            MetricError::InvalidRadius(r) => write!(f, "radius must be positive, got {r}"),
            MetricError::Lie(e) => write!(f, "{e}"),
            MetricError::Budget { nodes, cap } => {
                write!(f, "lattice has {nodes} nodes, above the cap of {cap}")
            }
        }
    }
}

impl core::error::Error for MetricError {}

impl From<LieError> for MetricError {
    fn from(e: LieError) -> MetricError {
        MetricError::Lie(e)
    }
}

/// Oracle construction parameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleParams {
    /// Nominal lattice spacing (uniform oracles).
    pub h: f64,
    /// RK4 substeps per segment.
    pub steps_per_edge: usize,
    /// Number of control directions; `None` picks 32 for `m ≤ 3`, `16m` above.
    pub directions: Option<usize>,
    /// Segment control magnitudes as multiples of the reference spacing.
    pub tau_multiples: Vec<f64>,
    /// Largest accepted landing error, in units of the per-axis spacing.
    pub accept_residual: f64,
    /// Replace runs of path segments by single exact segments.
    pub shortcut: bool,
    /// Error model `c1 h + c2 h^{1/s}`.
    pub error_c1: f64,
    pub error_c2: f64,
    /// Cap on the number of lattice nodes.
    pub node_cap: u64,
}

impl Default for OracleParams {
    fn default() -> OracleParams {
        OracleParams {
            h: 1.0 / 32.0,
            steps_per_edge: 2,
            directions: None,
            tau_multiples: vec![1.0, 2.0],
            accept_residual: 0.5,
            shortcut: true,
            error_c1: 2.0,
            error_c2: 0.0,
            node_cap: 2_000_000,
        }
    }
}

impl OracleParams {
    pub fn with_h(h: f64) -> OracleParams {
        OracleParams { h, ..OracleParams::default() }
    }
}

/// Axis-aligned lattice `lo + k ⊙ spacing`, `0 ≤ k < counts`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Lattice {
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Lattice {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.lo[axis] + self.spacing[axis] * (self.counts[axis] - 1) as f64
    }

    pub fn index(&self, k: &[usize]) -> usize {
        let mut idx = 0;
        for a in (0..self.dim()).rev() {
            idx = idx * self.counts[a] + k[a];
        }
        idx
    }

    pub fn multi(&self, mut idx: usize, out: &mut [usize]) {
        for a in 0..self.dim() {
            out[a] = idx % self.counts[a];
            idx /= self.counts[a];
        }
    }

    pub fn position(&self, idx: usize, out: &mut [f64]) {
        let mut rest = idx;
        for a in 0..self.dim() {
            let k = rest % self.counts[a];
            rest /= self.counts[a];
            out[a] = if k + 1 == self.counts[a] { self.hi(a) } else { self.lo[a] + self.spacing[a] * k as f64 };
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.position(idx, &mut p);
        p
    }

    /// Nearest node, or `None` when `x` is more than half a cell outside.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for a in (0..self.dim()).rev() {
            let t = math::round((x[a] - self.lo[a]) / self.spacing[a]);
            if !(t >= 0.0 && t <= (self.counts[a] - 1) as f64) {
                return None;
            }
            idx = idx * self.counts[a] + t as usize;
        }
        Some(idx)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|a| {
            let tol = 1e-9 * self.spacing[a];
            x[a] >= self.lo[a] - tol && x[a] <= self.hi(a) + tol
        })
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mut rest = idx;
        for a in 0..self.dim() {
            let k = rest % self.counts[a];
            rest /= self.counts[a];
            if k == 0 || k + 1 == self.counts[a] {
                return true;
            }
        }
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Nodes whose multi-index differs from that of `center` by at most
    /// `radius` along every axis.
    pub fn neighborhood(&self, center: usize, radius: usize) -> Vec<usize> {
        let n = self.dim();
        let mut c = vec![0usize; n];
        self.multi(center, &mut c);
        let mut out = Vec::new();
        let span = 2 * radius + 1;
        let total = span.pow(n as u32);
        let mut k = vec![0usize; n];
        for t in 0..total {
            let mut rest = t;
            let mut ok = true;
            for a in 0..n {
                let off = (rest % span) as isize - radius as isize;
                rest /= span;
                let v = c[a] as isize + off;
                if v < 0 || v >= self.counts[a] as isize {
                    ok = false;
                    break;
                }
                k[a] = v as usize;
            }
            if ok {
                out.push(self.index(&k));
            }
        }
        out
    }
}

/// Horizontal flows of a system with constant controls.
#[derive(Clone, Debug)]
pub struct Flow {
    n: usize,
    m: usize,
    program: Program,
    steps: usize,
}

/// Scratch space for flows and control solves.
#[derive(Default, Debug)]
pub struct FlowWork {
    scratch: Vec<f64>,
    mat: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    end: Vec<f64>,
    res: Vec<f64>,
    jac: Vec<f64>,
    trial: Vec<f64>,
}

impl Flow {
    pub fn new(sys: &VectorFieldSystem, steps: usize) -> Flow {
        Flow { n: sys.dim(), m: sys.count(), program: sys.compile(), steps: steps.max(1) }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn controls(&self) -> usize {
        self.m
    }

    /// Field matrix at `x`, row `j` is `X_j(x)`.
    pub fn fields_at(&self, x: &[f64], w: &mut FlowWork) -> bool {
        w.mat.resize(self.m * self.n, 0.0);
        self.program.eval_into(x, &mut w.scratch, &mut w.mat).is_ok()
    }

    fn velocity(&self, x: &[f64], a: &[f64], w: &mut FlowWork, slot: usize) -> bool {
        if !self.fields_at(x, w) {
            return false;
        }
        let out = &mut w.k[slot];
        out.clear();
        out.resize(self.n, 0.0);
        for j in 0..self.m {
            let aj = a[j];
            if aj != 0.0 {
                for i in 0..self.n {
                    out[i] += aj * w.mat[j * self.n + i];
                }
            }
        }
        true
    }

    /// Endpoint of the unit-time flow of `Σ a_j X_j` from `x`, written to `out`.
    pub fn flow(&self, x: &[f64], a: &[f64], w: &mut FlowWork, out: &mut Vec<f64>) -> bool {
        out.clear();
        out.extend_from_slice(x);
        let dt = 1.0 / self.steps as f64;
        let n = self.n;
        for _ in 0..self.steps {
            if !self.velocity(out, a, w, 0) {
                return false;
            }
            w.tmp.clear();
            w.tmp.extend((0..n).map(|i| out[i] + 0.5 * dt * w.k[0][i]));
            let tmp = core::mem::take(&mut w.tmp);
            let ok = self.velocity(&tmp, a, w, 1);
            w.tmp = tmp;
            if !ok {
                return false;
            }
            w.tmp.clear();
            w.tmp.extend((0..n).map(|i| out[i] + 0.5 * dt * w.k[1][i]));
            let tmp = core::mem::take(&mut w.tmp);
            let ok = self.velocity(&tmp, a, w, 2);
            w.tmp = tmp;
            if !ok {
                return false;
            }
            w.tmp.clear();
            w.tmp.extend((0..n).map(|i| out[i] + dt * w.k[2][i]));
            let tmp = core::mem::take(&mut w.tmp);
            let ok = self.velocity(&tmp, a, w, 3);
            w.tmp = tmp;
            if !ok {
                return false;
            }
            for i in 0..n {
                out[i] += dt / 6.0 * (w.k[0][i] + 2.0 * w.k[1][i] + 2.0 * w.k[2][i] + w.k[3][i]);
            }
        }
        out.iter().all(|v| v.is_finite())
    }

    /// Least-squares control for the straight step `x → target` using the
    /// fields frozen at `x`, with residuals weighted by `inv_scale`.
    pub fn linear_guess(&self, x: &[f64], target: &[f64], inv_scale: &[f64], w: &mut FlowWork) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        if !self.fields_at(x, w) {
            return vec![0.0; m];
        }
        let mut ata = vec![0.0; m * m];
        let mut atb = vec![0.0; m];
        for j in 0..m {
            for i in 0..n {
                let s = inv_scale[i] * inv_scale[i];
                atb[j] += w.mat[j * n + i] * (target[i] - x[i]) * s;
                for k in 0..m {
                    ata[j * m + k] += w.mat[j * n + i] * w.mat[k * n + i] * s;
                }
            }
        }
        let tr: f64 = (0..m).map(|j| ata[j * m + j]).sum();
        for j in 0..m {
            ata[j * m + j] += 1e-12 * tr.max(1e-300);
        }
        linalg::solve(&ata, &atb, m).unwrap_or_else(|| vec![0.0; m])
    }

    /// Refines the control so the flow from `x` lands on `target`.
    ///
    /// Returns the control and the max-norm of the landing error measured in
    /// units of `1/inv_scale`.
    pub fn solve_control(
        &self,
        x: &[f64],
        target: &[f64],
        a0: &[f64],
        inv_scale: &[f64],
        w: &mut FlowWork,
    ) -> Option<(Vec<f64>, f64)> {
        let (n, m) = (self.n, self.m);
        let mut a = a0.to_vec();
        let mut end = core::mem::take(&mut w.end);
        let mut res = core::mem::take(&mut w.res);
        let mut jac = core::mem::take(&mut w.jac);
        let mut trial = core::mem::take(&mut w.trial);
        let residual = |flow: &Flow, a: &[f64], w: &mut FlowWork, end: &mut Vec<f64>, res: &mut Vec<f64>| -> bool {
            if !flow.flow(x, a, w, end) {
                return false;
            }
            res.clear();
            res.extend((0..n).map(|i| (end[i] - target[i]) * inv_scale[i]));
            true
        };
        let result = (|| {
            if !residual(self, &a, w, &mut end, &mut res) {
                return None;
            }
            let mut cost = linalg::dot(&res, &res);
            let mut lambda = 1e-3;
            let mut stall = 0;
            for _ in 0..20 {
                if cost < 1e-28 {
                    break;
                }
                let anorm = math::norm2(&a);
                jac.clear();
                jac.resize(n * m, 0.0);
                let base = res.clone();
                for j in 0..m {
                    let eps = 1e-7 * anorm.max(1e-8);
                    trial.clear();
                    trial.extend_from_slice(&a);
                    trial[j] += eps;
                    if !residual(self, &trial, w, &mut end, &mut res) {
                        return None;
                    }
                    for i in 0..n {
                        jac[i * m + j] = (res[i] - base[i]) / eps;
                    }
                }
                let mut jtj = vec![0.0; m * m];
                let mut jtr = vec![0.0; m];
                for i in 0..n {
                    for j in 0..m {
                        jtr[j] += jac[i * m + j] * base[i];
                        for k in 0..m {
                            jtj[j * m + k] += jac[i * m + j] * jac[i * m + k];
                        }
                    }
                }
                let mut improved = false;
                for _ in 0..8 {
                    let mut mat = jtj.clone();
                    for j in 0..m {
                        mat[j * m + j] += lambda * (jtj[j * m + j] + 1e-12);
                    }
                    let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
                    let Some(delta) = linalg::solve(&mat, &rhs, m) else {
                        lambda *= 10.0;
                        continue;
                    };
                    trial.clear();
                    trial.extend(a.iter().zip(&delta).map(|(x, d)| x + d));
                    if residual(self, &trial, w, &mut end, &mut res) {
                        let c = linalg::dot(&res, &res);
                        if c < cost {
                            let rel = (cost - c) / cost;
                            a.clear();
                            a.extend_from_slice(&trial);
                            cost = c;
                            lambda = (lambda / 4.0).max(1e-12);
                            improved = true;
                            stall = if rel < 1e-4 { stall + 1 } else { 0 };
                            break;
                        }
                    }
                    lambda *= 8.0;
                }
                if !improved || stall >= 2 {
                    break;
                }
            }
            if !residual(self, &a, w, &mut end, &mut res) {
                return None;
            }
            let worst = res.iter().fold(0.0f64, |s, v| s.max(math::abs(*v)));
            Some((a.clone(), worst))
        })();
        w.end = end;
        w.res = res;
        w.jac = jac;
        w.trial = trial;
        result
    }
}

/// Control directions on the unit sphere of `R^m`.
pub fn control_directions(m: usize, count: Option<usize>) -> Vec<Vec<f64>> {
    let d = count.unwrap_or(if m <= 3 { 32 } else { 16 * m });
    match m {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..d)
            .map(|k| {
                let t = 2.0 * math::PI * k as f64 / d as f64;
                vec![math::cos(t), math::sin(t)]
            })
            .collect(),
        3 => {
            // Fibonacci lattice on the sphere.
            let golden = math::PI * (3.0 - math::sqrt(5.0));
            (0..d)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / d as f64;
                    let rho = math::sqrt((1.0 - z * z).max(0.0));
                    let t = golden * k as f64;
                    vec![rho * math::cos(t), rho * math::sin(t), z]
                })
                .collect()
        }
        _ => {
            let mut out = Vec::with_capacity(d);
            for j in 0..m {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                out.push(e.clone());
                e[j] = -1.0;
                out.push(e);
            }
            let mut g = rng::stream(0x5eed, 0);
            while out.len() < d {
                let v: Vec<f64> = (0..m).map(|_| g.random::<f64>() * 2.0 - 1.0).collect();
                let r = math::norm2(&v);
                if r > 0.1 && r <= 1.0 {
                    out.push(v.iter().map(|x| x / r).collect());
                }
            }
            out
        }
    }
}

/// Discretized control distance on a box lattice.
#[derive(Clone, Debug)]
pub struct DistanceOracle {
    flow: Flow,
    lattice: Lattice,
    domain: DomainSpec,
    params: OracleParams,
    s_max: usize,
    offsets: Vec<u32>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

/// An undirected edge list: `(u, v, weight)` with `u < v`.
pub type EdgeList = Vec<(u32, u32, f64)>;

impl DistanceOracle {
    /// Uniform lattice over the domain box with spacing close to `params.h`.
    pub fn build(
        sys: &VectorFieldSystem,
        domain: &DomainSpec,
        params: &OracleParams,
        s_max: usize,
    ) -> Result<DistanceOracle, MetricError> {
        let n = sys.dim();
        if domain.dim() != n || !(params.h > 0.0) {
            return Err(MetricError::DomainTooSmall);
        }
        let mut counts = Vec::with_capacity(n);
        let mut spacing = Vec::with_capacity(n);
        for a in 0..n {
            let len = domain.hi[a] - domain.lo[a];
            if !(len > 0.0) {
                return Err(MetricError::DomainTooSmall);
            }
            let cells = math::round(len / params.h).max(1.0) as usize;
            if cells + 1 < 8 {
                return Err(MetricError::TooCoarse { axis: a, nodes: cells + 1 });
            }
            counts.push(cells + 1);
            spacing.push(len / cells as f64);
        }
        let lattice = Lattice { lo: domain.lo.clone(), spacing, counts };
        let h_ref = lattice.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        DistanceOracle::build_on(sys, domain, lattice, params, h_ref, s_max)
    }

    /// Builds the graph on an explicit lattice with segment magnitudes
    /// `tau_multiples × h_ref`.
    pub fn build_on(
        sys: &VectorFieldSystem,
        domain: &DomainSpec,
        lattice: Lattice,
        params: &OracleParams,
        h_ref: f64,
        s_max: usize,
    ) -> Result<DistanceOracle, MetricError> {
        let total = lattice.len() as u64;
        if total > params.node_cap {
            return Err(MetricError::Budget { nodes: total, cap: params.node_cap });
        }
        let flow = Flow::new(sys, params.steps_per_edge);
        let edges = generate_edges(&flow, &lattice, params, h_ref);
        Ok(DistanceOracle::from_edges(flow, lattice, domain.clone(), params.clone(), s_max, &edges))
    }

    /// Rebuilds an oracle from a stored edge list.
    pub fn from_edges(
        flow: Flow,
        lattice: Lattice,
        domain: DomainSpec,
        params: OracleParams,
        s_max: usize,
        edges: &[(u32, u32, f64)],
    ) -> DistanceOracle {
        let nn = lattice.len();
        let mut deg = vec![0u32; nn + 1];
        for &(u, v, _) in edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        let mut offsets = vec![0u32; nn + 1];
        for i in 0..nn {
            offsets[i + 1] = offsets[i] + deg[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[nn] as usize];
        let mut weights = vec![0.0; offsets[nn] as usize];
        for &(u, v, w) in edges {
            let k = fill[u as usize] as usize;
            targets[k] = v;
            weights[k] = w;
            fill[u as usize] += 1;
            let k = fill[v as usize] as usize;
            targets[k] = u;
            weights[k] = w;
            fill[v as usize] += 1;
        }
        DistanceOracle { flow, lattice, domain, params, s_max: s_max.max(1), offsets, targets, weights }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    pub fn flow(&self) -> &Flow {
        &self.flow
    }

    pub fn s_max(&self) -> usize {
        self.s_max
    }

    pub fn node_count(&self) -> usize {
        self.lattice.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    /// Edges with `u < v`, in node order.
    pub fn edges(&self) -> EdgeList {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in 0..self.lattice.len() {
            for k in self.offsets[u] as usize..self.offsets[u + 1] as usize {
                let v = self.targets[k];
                if (u as u32) < v {
                    out.push((u as u32, v, self.weights[k]));
                }
            }
        }
        out
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[u] as usize, self.offsets[u + 1] as usize);
        self.targets[a..b].iter().zip(&self.weights[a..b]).map(|(&v, &w)| (v as usize, w))
    }

    /// Largest lattice spacing.
    pub fn h(&self) -> f64 {
        self.lattice.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// `c1 h + c2 h^{1/s_max}`.
    pub fn error_bound(&self) -> f64 {
        let h = self.h();
        self.params.error_c1 * h + self.params.error_c2 * math::pow(h, 1.0 / self.s_max as f64)
    }

    pub fn with_error_model(mut self, c1: f64, c2: f64) -> DistanceOracle {
        self.params.error_c1 = c1;
        self.params.error_c2 = c2;
        self
    }

    fn inv_scale(&self) -> Vec<f64> {
        self.lattice.spacing.iter().map(|s| 1.0 / s).collect()
    }

    fn check_inside(&self, x: &[f64]) -> Result<(), MetricError> {
        if x.len() == self.lattice.dim() && self.lattice.contains(x) {
            Ok(())
        } else {
            Err(MetricError::OutsideDomain(x.to_vec()))
        }
    }

    /// Segments from `x` to the nodes within two cells: `(node, cost)`.
    pub fn links(&self, x: &[f64], w: &mut FlowWork) -> Vec<(usize, f64)> {
        let Some(c) = self.lattice.nearest(x) else {
            return Vec::new();
        };
        let inv = self.inv_scale();
        let mut out = Vec::new();
        let mut p = vec![0.0; self.lattice.dim()];
        for v in self.lattice.neighborhood(c, 2) {
            self.lattice.position(v, &mut p);
            let exact_node = (0..p.len()).all(|a| math::abs((p[a] - x[a]) * inv[a]) < 1e-9);
            if exact_node {
                out.push((v, 0.0));
                continue;
            }
            if let Some(cost) = self.segment_cost(x, &p, &inv, self.params.accept_residual, w) {
                out.push((v, cost));
            }
        }
        out
    }

    /// Cost of the single best constant-control segment `x → y`, if it lands
    /// within `tol` cells of `y`.
    pub fn segment_cost(&self, x: &[f64], y: &[f64], inv: &[f64], tol: f64, w: &mut FlowWork) -> Option<f64> {
        let a0 = self.flow.linear_guess(x, y, inv, w);
        let (a, res) = self.flow.solve_control(x, y, &a0, inv, w)?;
        if res <= tol {
            Some(math::norm2(&a))
        } else {
            None
        }
    }

    /// Single-source shortest paths from an arbitrary point of the box.
    pub fn field_from(&self, x: &[f64]) -> Result<DistanceField, MetricError> {
        self.check_inside(x)?;
        let mut w = FlowWork::default();
        let links = self.links(x, &mut w);
        let nn = self.lattice.len();
        let mut dist = vec![f64::INFINITY; nn];
        let mut pred = vec![UNREACHED; nn];
        let mut heap = BinaryHeap::new();
        for &(v, c) in &links {
            if c < dist[v] {
                dist[v] = c;
                pred[v] = FROM_SOURCE;
                heap.push(Entry(c, v as u32));
            }
        }
        while let Some(Entry(d, u)) = heap.pop() {
            let u = u as usize;
            if d > dist[u] {
                continue;
            }
            for (v, wt) in self.neighbors(u) {
                let nd = d + wt;
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = u as u32;
                    heap.push(Entry(nd, v as u32));
                }
            }
        }
        Ok(DistanceField { source: x.to_vec(), dist, pred })
    }

    /// `d̂(x, y)` with its error bound.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64), MetricError> {
        let field = self.field_from(x)?;
        Ok((self.distance_with(&field, y)?.0, self.error_bound()))
    }

    /// `d̂(field.source, y)` and the node sequence of the realizing path.
    pub fn distance_with(&self, field: &DistanceField, y: &[f64]) -> Result<(f64, Vec<Vec<f64>>), MetricError> {
        self.check_inside(y)?;
        let mut w = FlowWork::default();
        let inv = self.inv_scale();
        let x = &field.source;
        let mut best = f64::INFINITY;
        let mut best_node = None;
        // Direct segment when the two points are close.
        let close = (0..x.len()).all(|a| math::abs(x[a] - y[a]) * inv[a] <= 2.0 + 1e-9);
        if close {
            if (0..x.len()).all(|a| x[a] == y[a]) {
                return Ok((0.0, vec![x.clone(), y.to_vec()]));
            }
            if let Some(c) = self.segment_cost(x, y, &inv, EXACT_RESIDUAL, &mut w) {
                best = c;
            }
        }
        for (v, c) in self.links(y, &mut w) {
            let total = field.dist[v] + c;
            if total < best {
                best = total;
                best_node = Some(v);
            }
        }
        if !best.is_finite() {
            return Err(MetricError::ResolutionInsufficient);
        }
        let mut path = vec![y.to_vec()];
        if let Some(mut v) = best_node {
            loop {
                path.push(self.lattice.node(v));
                let p = field.pred[v];
                if p == FROM_SOURCE {
                    break;
                }
                v = p as usize;
            }
        }
        path.push(x.clone());
        path.reverse();
        path.dedup();
        if self.params.shortcut && path.len() > 2 {
            // Greedy shortening depends on the sweep direction; try both.
            let (fwd, short) = self.shortcut(&path, &mut w);
            let mut rev_path = path.clone();
            rev_path.reverse();
            let (bwd, mut rev_short) = self.shortcut(&rev_path, &mut w);
            if fwd.min(bwd) < best {
                if bwd < fwd {
                    rev_short.reverse();
                    return Ok((bwd, rev_short));
                }
                return Ok((fwd, short));
            }
        }
        Ok((best, path))
    }

    /// Replaces runs of consecutive segments by a single exact segment when
    /// that is cheaper.
    fn shortcut(&self, path: &[Vec<f64>], w: &mut FlowWork) -> (f64, Vec<Vec<f64>>) {
        let inv = self.inv_scale();
        let k = path.len();
        let mut seg = Vec::with_capacity(k - 1);
        for i in 0..k - 1 {
            match self.segment_cost(&path[i], &path[i + 1], &inv, self.params.accept_residual, w) {
                Some(c) => seg.push(c),
                None => return (f64::INFINITY, path.to_vec()),
            }
        }
        let mut prefix = vec![0.0; k];
        for i in 0..k - 1 {
            prefix[i + 1] = prefix[i] + seg[i];
        }
        let try_jump = |i: usize, j: usize, w: &mut FlowWork| -> Option<f64> {
            let c = self.segment_cost(&path[i], &path[j], &inv, EXACT_RESIDUAL, w)?;
            if c <= prefix[j] - prefix[i] {
                Some(c)
            } else {
                None
            }
        };
        let mut out = vec![path[0].clone()];
        let mut total = 0.0;
        let mut i = 0;
        while i + 1 < k {
            let mut good = i + 1;
            let mut good_cost = seg[i];
            let mut step = 1;
            let mut bad = k;
            loop {
                let j = i + 2 * step;
                if j >= k {
                    if good < k - 1 {
                        if let Some(c) = try_jump(i, k - 1, w) {
                            good = k - 1;
                            good_cost = c;
                        } else {
                            bad = k - 1;
                        }
                    }
                    break;
                }
                match try_jump(i, j, w) {
                    Some(c) => {
                        good = j;
                        good_cost = c;
                        step *= 2;
                    }
                    None => {
                        bad = j;
                        break;
                    }
                }
            }
            while bad > good + 1 {
                let mid = (good + bad) / 2;
                match try_jump(i, mid, w) {
                    Some(c) => {
                        good = mid;
                        good_cost = c;
                    }
                    None => bad = mid,
                }
            }
            total += good_cost;
            out.push(path[good].clone());
            i = good;
        }
        (total, out)
    }

    /// Node path realizing `d̂(x, y)`; consecutive points are joined by
    /// horizontal segments.
    pub fn approximate_geodesic(&self, x: &[f64], y: &[f64]) -> Result<Vec<Vec<f64>>, MetricError> {
        let field = self.field_from(x)?;
        Ok(self.distance_with(&field, y)?.1)
    }

    /// `d̂(center, query) < r`, using `cache` for the field from `center`.
    pub fn ball_membership(
        &self,
        cache: &mut FieldCache,
        center: &[f64],
        r: f64,
        query: &[f64],
    ) -> Result<bool, MetricError> {
        let field = cache.get_or_build(self, center)?;
        let mut w = FlowWork::default();
        self.check_inside(query)?;
        let mut best = f64::INFINITY;
        for (v, c) in self.links(query, &mut w) {
            best = best.min(field.dist[v] + c);
        }
        Ok(best < r)
    }

    /// Number of connected components of the graph.
    pub fn component_count(&self) -> usize {
        let nn = self.lattice.len();
        let mut parent: Vec<u32> = (0..nn as u32).collect();
        fn find(p: &mut [u32], mut x: u32) -> u32 {
            while p[x as usize] != x {
                p[x as usize] = p[p[x as usize] as usize];
                x = p[x as usize];
            }
            x
        }
        for u in 0..nn {
            for (v, _) in self.neighbors(u) {
                let (a, b) = (find(&mut parent, u as u32), find(&mut parent, v as u32));
                if a != b {
                    parent[a.max(b) as usize] = a.min(b);
                }
            }
        }
        (0..nn as u32).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// Multilinear interpolation of a distance field at `y`.
    pub fn interpolate(&self, field: &DistanceField, y: &[f64]) -> f64 {
        let lat = &self.lattice;
        let n = lat.dim();
        let mut base = [0usize; 16];
        let mut frac = [0.0f64; 16];
        for a in 0..n {
            let t = (y[a] - lat.lo[a]) / lat.spacing[a];
            if !(t >= 0.0 && t <= (lat.counts[a] - 1) as f64) {
                return f64::INFINITY;
            }
            let k = (math::floor(t) as usize).min(lat.counts[a] - 2);
            base[a] = k;
            frac[a] = t - k as f64;
        }
        let mut acc = 0.0;
        let mut k = [0usize; 16];
        for corner in 0..(1usize << n) {
            let mut wgt = 1.0;
            for a in 0..n {
                let bit = (corner >> a) & 1;
                k[a] = base[a] + bit;
                wgt *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if wgt == 0.0 {
                continue;
            }
            let d = field.dist[lat.index(&k[..n])];
            if !d.is_finite() {
                return f64::INFINITY;
            }
            acc += wgt * d;
        }
        acc
    }
}

fn generate_edges(flow: &Flow, lattice: &Lattice, params: &OracleParams, h_ref: f64) -> EdgeList {
    let n = lattice.dim();
    let m = flow.controls();
    let dirs = control_directions(m, params.directions);
    let inv: Vec<f64> = lattice.spacing.iter().map(|s| 1.0 / s).collect();
    let mut w = FlowWork::default();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut end = Vec::new();
    let mut edges: EdgeList = Vec::new();
    let mut cand: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
    let mut a0 = vec![0.0; m];
    for u in 0..lattice.len() {
        lattice.position(u, &mut x);
        cand.clear();
        for d in &dirs {
            for &t in &params.tau_multiples {
                let tau = t * h_ref;
                for j in 0..m {
                    a0[j] = tau * d[j];
                }
                if !flow.flow(&x, &a0, &mut w, &mut end) {
                    continue;
                }
                let Some(v) = lattice.nearest(&end) else { continue };
                if v == u {
                    continue;
                }
                lattice.position(v, &mut y);
                let miss = (0..n).fold(0.0f64, |s, a| s.max(math::abs((end[a] - y[a]) * inv[a])));
                let better = cand.get(&v).is_none_or(|(mb, _)| miss < *mb);
                if better {
                    cand.insert(v, (miss, a0.clone()));
                }
            }
        }
        for (&v, (_, start)) in &cand {
            lattice.position(v, &mut y);
            if let Some((a, res)) = flow.solve_control(&x, &y, start, &inv, &mut w) {
                if res <= params.accept_residual {
                    let (p, q) = if u < v { (u, v) } else { (v, u) };
                    edges.push((p as u32, q as u32, math::norm2(&a)));
                }
            }
        }
    }
    // Keep the cheaper of the two directions found for each pair.
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    edges.dedup_by(|later, earlier| later.0 == earlier.0 && later.1 == earlier.1);
    edges
}

#[derive(Clone, Copy, Debug)]
struct Entry(f64, u32);

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap; ties broken by node index.
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Distances from one source point to every lattice node.
#[derive(Clone, Debug)]
pub struct DistanceField {
    pub source: Vec<f64>,
    pub dist: Vec<f64>,
    pred: Vec<u32>,
}

impl DistanceField {
    pub fn reached(&self) -> usize {
        self.dist.iter().filter(|d| d.is_finite()).count()
    }
}

/// Distance fields keyed by source point. Filling takes `&mut self`, so a
/// cache has a single writer; readers hold `Arc`s to complete fields.
#[derive(Default, Debug)]
pub struct FieldCache {
    fields: BTreeMap<Vec<u64>, Arc<DistanceField>>,
}

impl FieldCache {
    pub fn new() -> FieldCache {
        FieldCache::default()
    }

    pub fn get(&self, x: &[f64]) -> Option<Arc<DistanceField>> {
        self.fields.get(&key(x)).cloned()
    }

    pub fn get_or_build(&mut self, oracle: &DistanceOracle, x: &[f64]) -> Result<Arc<DistanceField>, MetricError> {
        let k = key(x);
        if let Some(f) = self.fields.get(&k) {
            return Ok(f.clone());
        }
        let f = Arc::new(oracle.field_from(x)?);
        self.fields.insert(k, f.clone());
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Anisotropic box shape adapted to a point: axis `a` of a ball of radius
/// `r` is expected to extend about `scale[a] · r^{weight[a]}`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LocalFrame {
    pub center: Vec<f64>,
    pub weight: Vec<usize>,
    pub scale: Vec<f64>,
}

impl LocalFrame {
    /// Takes a tuple attaining `ν(x)` and assigns its columns to coordinate
    /// axes by the permutation maximizing the product of the matched
    /// components.
    pub fn at(basis: &CommutatorBasis, x: &[f64], tol: f64) -> Result<LocalFrame, MetricError> {
        let a = basis.analyze_point(x, tol)?;
        if a.nu.is_none() {
            return Err(LieError::NoSpanningTuple { point: x.to_vec() }.into());
        }
        let n = basis.dim();
        let cols: Vec<Vec<f64>> = a
            .nu_witness
            .iter()
            .map(|&i| basis.entries()[i].field.evaluate(x))
            .collect::<Result<_, _>>()
            .map_err(LieError::from)?;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = (f64::NEG_INFINITY, perm.clone());
        permute(&mut perm, 0, &mut |p| {
            let s: f64 = (0..n).map(|k| math::ln(math::abs(cols[k][p[k]]).max(1e-300))).sum();
            if s > best.0 {
                best = (s, p.to_vec());
            }
        });
        let mut weight = vec![1; n];
        let mut scale = vec![1.0; n];
        for (k, &axis) in best.1.iter().enumerate() {
            weight[axis] = basis.degree(a.nu_witness[k]);
            scale[axis] = math::abs(cols[k][axis]).max(1e-12);
        }
        Ok(LocalFrame { center: x.to_vec(), weight, scale })
    }

    pub fn extents(&self, r: f64) -> Vec<f64> {
        self.weight.iter().zip(&self.scale).map(|(&w, &s)| 1.5 * s * math::powi(r, w as i32)).collect()
    }
}

fn permute(p: &mut [usize], k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// Settings of the oracles fitted to a single ball.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LocalParams {
    /// Nodes per axis (odd, so the center is a node).
    pub nodes_per_axis: usize,
    pub max_rounds: usize,
    pub oracle: OracleParams,
}

impl Default for LocalParams {
    fn default() -> LocalParams {
        LocalParams { nodes_per_axis: 37, max_rounds: 8, oracle: OracleParams::default() }
    }
}

impl LocalParams {
    pub fn for_dim(n: usize) -> LocalParams {
        let nodes = if n <= 2 { 41 } else { 33 };
        LocalParams { nodes_per_axis: nodes, ..LocalParams::default() }
    }
}

/// An oracle whose box is fitted to the ball `B(center, r)`.
#[derive(Clone, Debug)]
pub struct LocalOracle {
    pub oracle: DistanceOracle,
    pub field: Arc<DistanceField>,
    pub frame: LocalFrame,
    pub r: f64,
    pub extents: Vec<f64>,
    pub rounds: usize,
}

impl LocalOracle {
    /// Grows axes the ball touches and shrinks axes it fills by less than
    /// 55%, until neither happens. All tests are ratios, so the fitted box
    /// follows the dilation structure of the frame.
    pub fn fit(
        sys: &VectorFieldSystem,
        domain: &DomainSpec,
        frame: &LocalFrame,
        r: f64,
        params: &LocalParams,
        s_max: usize,
    ) -> Result<LocalOracle, MetricError> {
        if !(r > 0.0) {
            return Err(MetricError::InvalidRadius(r));
        }
        let n = frame.center.len();
        let nodes = (params.nodes_per_axis | 1).max(9);
        let mut ext = frame.extents(r);
        let mut rounds = 0;
        loop {
            rounds += 1;
            let spacing: Vec<f64> = ext.iter().map(|e| 2.0 * e / (nodes - 1) as f64).collect();
            let lattice = Lattice {
                lo: frame.center.iter().zip(&ext).map(|(c, e)| c - e).collect(),
                spacing: spacing.clone(),
                counts: vec![nodes; n],
            };
            let min_w = *frame.weight.iter().min().unwrap_or(&1);
            let h_ref = (0..n)
                .filter(|&a| frame.weight[a] == min_w)
                .map(|a| spacing[a])
                .fold(f64::INFINITY, f64::min);
            let oracle = DistanceOracle::build_on(sys, domain, lattice, &params.oracle, h_ref, s_max)?;
            let field = oracle.field_from(&frame.center)?;
            let lat = oracle.lattice();
            let mut touch = vec![false; n];
            let mut reach = vec![0.0f64; n];
            let mut k = vec![0usize; n];
            let mut p = vec![0.0; n];
            for idx in 0..lat.len() {
                if field.dist[idx] >= r {
                    continue;
                }
                lat.multi(idx, &mut k);
                lat.position(idx, &mut p);
                for a in 0..n {
                    if k[a] == 0 || k[a] + 1 == nodes {
                        touch[a] = true;
                    }
                    reach[a] = reach[a].max(math::abs(p[a] - frame.center[a]));
                }
            }
            let done = rounds >= params.max_rounds;
            if touch.iter().any(|&t| t) && !done {
                for a in 0..n {
                    if touch[a] {
                        ext[a] *= 1.3;
                    }
                }
                continue;
            }
            let thin: Vec<bool> = (0..n).map(|a| reach[a] > 0.0 && reach[a] < 0.55 * ext[a]).collect();
            if thin.iter().any(|&t| t) && !done {
                for a in 0..n {
                    if thin[a] {
                        ext[a] = reach[a] / 0.8;
                    }
                }
                continue;
            }
            let field = Arc::new(field);
            return Ok(LocalOracle { oracle, field, frame: frame.clone(), r, extents: ext, rounds });
        }
    }

    /// Nodes of the fitted ball must lie in the domain closure.
    pub fn check_inside(&self, domain: &DomainSpec) -> Result<(), MetricError> {
        let lat = self.oracle.lattice();
        let mut p = vec![0.0; lat.dim()];
        for idx in 0..lat.len() {
            if self.field.dist[idx] < self.r {
                lat.position(idx, &mut p);
                if !domain.contains_closed(&p) {
                    return Err(MetricError::BallEscapesDomain { center: self.frame.center.clone(), r: self.r });
                }
            }
        }
        Ok(())
    }

    /// Interpolated `d̂(center, y)`.
    pub fn distance_to(&self, y: &[f64]) -> f64 {
        self.oracle.interpolate(&self.field, y)
    }

    /// Bounding box `(lo, hi)` of the nodes with `d̂ < r`, padded by one cell.
    pub fn ball_bounding_box(&self, r: f64) -> (Vec<f64>, Vec<f64>) {
        let lat = self.oracle.lattice();
        let n = lat.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        let mut p = vec![0.0; n];
        for idx in 0..lat.len() {
            if self.field.dist[idx] < r {
                lat.position(idx, &mut p);
                for a in 0..n {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        for a in 0..n {
            lo[a] = (lo[a] - lat.spacing[a]).max(lat.lo[a]);
            hi[a] = (hi[a] + lat.spacing[a]).min(lat.hi(a));
        }
        (lo, hi)
    }
}

/// `d̂(x, y)` from oracles fitted around `x` until the ball of radius
/// `1.2 d̂` fits in the lattice box.
pub fn local_distance(
    sys: &VectorFieldSystem,
    basis: &CommutatorBasis,
    domain: &DomainSpec,
    x: &[f64],
    y: &[f64],
    params: &LocalParams,
) -> Result<(f64, LocalOracle), MetricError> {
    let frame = LocalFrame::at(basis, x, crate::lie::DEFAULT_ZERO_TOL)?;
    let mut r: f64 = 0.0;
    for a in 0..x.len() {
        let d = math::abs(y[a] - x[a]) / (0.75 * frame.scale[a]);
        r = r.max(math::pow(d, 1.0 / frame.weight[a] as f64));
    }
    if r == 0.0 {
        let lo = LocalOracle::fit(sys, domain, &frame, 1e-3, params, basis.s0())?;
        return Ok((0.0, lo));
    }
    let mut last = None;
    for _ in 0..6 {
        let lo = LocalOracle::fit(sys, domain, &frame, r, params, basis.s0())?;
        let d = lo.oracle.distance_with(&lo.field, y).map(|v| v.0);
        match d {
            Ok(d) if d < r => return Ok((d, lo)),
            Ok(d) => r = 1.2 * d,
            Err(_) => r *= 1.5,
        }
        last = Some(lo);
    }
    let lo = last.ok_or(MetricError::ResolutionInsufficient)?;
    let d = lo.oracle.distance_with(&lo.field, y)?.0;
    Ok((d, lo))
}

/// Richardson calibration of `c2` in `c1 h + c2 h^{1/s}` from oracles at
/// `h` and `h/2`: `c2 = max |d_h − d_{h/2}| / (h^{1/s} (1 − 2^{−1/s}))`.
pub fn calibrate_error(
    coarse: &DistanceOracle,
    fine: &DistanceOracle,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64, MetricError> {
    let s = coarse.s_max() as f64;
    let h = coarse.h();
    let denom = math::pow(h, 1.0 / s) * (1.0 - math::pow(0.5, 1.0 / s));
    let mut c2: f64 = 0.0;
    for (x, y) in pairs {
        let a = coarse.distance(x, y)?.0;
        let b = fine.distance(x, y)?.0;
        c2 = c2.max(math::abs(a - b) / denom);
    }
    Ok(c2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_system;

    #[test]
    fn lattice_index_round_trip() {
        let lat = Lattice { lo: vec![0.0, -1.0, 2.0], spacing: vec![0.5, 0.25, 1.0], counts: vec![3, 9, 4] };
        let mut k = [0usize; 3];
        for idx in 0..lat.len() {
            lat.multi(idx, &mut k);
            assert_eq!(lat.index(&k), idx);
            assert_eq!(lat.nearest(&lat.node(idx)), Some(idx));
        }
    }

    #[test]
    fn heisenberg_flow_of_first_field() {
        let sys = parse_system("dim 3; X1 = D1 - (x2/2)*D3; X2 = D2 + (x1/2)*D3").unwrap();
        let flow = Flow::new(&sys, 2);
        let mut w = FlowWork::default();
        let mut out = Vec::new();
        assert!(flow.flow(&[0.0, 0.0, 0.0], &[0.1, 0.0], &mut w, &mut out));
        for (a, b) in out.iter().zip([0.1, 0.0, 0.0]) {
            assert!((a - b).abs() <= 1e-15, "{out:?}");
        }
    }

    #[test]
    fn directions_are_unit() {
        for m in 1..6 {
            for d in control_directions(m, None) {
                assert!((math::norm2(&d) - 1.0).abs() < 1e-12);
            }
        }
    }
}
