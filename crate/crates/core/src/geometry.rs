//! Ball volumes and the volume-driven checks built on them.
//!
//! Volumes are hit-or-miss Monte Carlo estimates over the bounding box of a
//! ball, with membership decided by multilinear interpolation of the
//! distance field of an oracle fitted to that ball. Samples come in chunks of
//! 4096, chunk `k` drawing from ChaCha stream `k` of the seed, so a run is
//! reproducible regardless of how chunks are scheduled.

use alloc::vec;
use alloc::vec::Vec;

use crate::lie::{CommutatorBasis, LambdaProfile, LieError, DEFAULT_ZERO_TOL};
use crate::math;
use crate::metric::{DistanceOracle, LocalFrame, LocalOracle, LocalParams, MetricError};
use crate::rng;
use crate::system::{DomainSpec, VectorFieldSystem};

pub const DEFAULT_SAMPLES: usize = 200_000;
const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct VolumeEstimate {
    pub center: Vec<f64>,
    pub r: f64,
    pub volume: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Interpolated distances from the oracle's center at `samples` uniform
/// points of `[lo, hi]`.
pub fn sample_distances(oracle: &LocalOracle, lo: &[f64], hi: &[f64], samples: usize, seed: u64) -> Vec<f64> {
    let n = lo.len();
    let mut out = Vec::with_capacity(samples);
    let mut p = vec![0.0; n];
    let chunks = samples.div_ceil(CHUNK);
    for c in 0..chunks {
        let mut g = rng::stream(seed, c as u64);
        let take = CHUNK.min(samples - c * CHUNK);
        for _ in 0..take {
            rng::uniform_in_box(&mut g, lo, hi, &mut p);
            out.push(oracle.distance_to(&p));
        }
    }
    out
}

fn box_volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(a, b)| b - a).product()
}

/// Hit-or-miss estimate of `|B(center, r)|` from a fitted oracle.
pub fn volume_from_oracle(oracle: &LocalOracle, r: f64, samples: usize, seed: u64) -> VolumeEstimate {
    let (lo, hi) = oracle.ball_bounding_box(r);
    let vol = box_volume(&lo, &hi);
    let d = sample_distances(oracle, &lo, &hi, samples, seed);
    let hits = d.iter().filter(|&&v| v < r).count();
    let p = hits as f64 / samples.max(1) as f64;
    VolumeEstimate {
        center: oracle.frame.center.clone(),
        r,
        volume: vol * p,
        stderr: vol * math::sqrt(p * (1.0 - p) / samples.max(1) as f64),
        samples,
        seed,
    }
}

/// Everything needed to estimate balls around points of one system.
#[derive(Clone, Debug)]
pub struct BallContext<'a> {
    pub sys: &'a VectorFieldSystem,
    pub basis: &'a CommutatorBasis,
    pub domain: &'a DomainSpec,
    pub local: LocalParams,
}

impl<'a> BallContext<'a> {
    pub fn new(sys: &'a VectorFieldSystem, basis: &'a CommutatorBasis, domain: &'a DomainSpec) -> BallContext<'a> {
        BallContext { sys, basis, domain, local: LocalParams::for_dim(sys.dim()) }
    }

    pub fn fit(&self, center: &[f64], r: f64) -> Result<LocalOracle, MetricError> {
        let frame = LocalFrame::at(self.basis, center, DEFAULT_ZERO_TOL)?;
        let lo = LocalOracle::fit(self.sys, self.domain, &frame, r, &self.local, self.basis.s0())?;
        lo.check_inside(self.domain)?;
        Ok(lo)
    }

    pub fn ball_volume(&self, center: &[f64], r: f64, samples: usize, seed: u64) -> Result<VolumeEstimate, MetricError> {
        let lo = self.fit(center, r)?;
        Ok(volume_from_oracle(&lo, r, samples, seed))
    }

    pub fn lambda(&self, center: &[f64]) -> Result<LambdaProfile, LieError> {
        self.basis.lambda_profile(center)
    }
}

/// `radii` geometric points spanning `[lo, hi]`.
pub fn geometric_radii(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let q = math::ln(hi / lo) / (count - 1) as f64;
    (0..count).map(|k| lo * math::exp(q * k as f64)).collect()
}

/// Default radii of the volume sweeps: `[0.05, 0.25]` times the smallest box side.
pub fn default_sweep_radii(domain: &DomainSpec, count: usize) -> Vec<f64> {
    let side = (0..domain.dim()).map(|a| domain.hi[a] - domain.lo[a]).fold(f64::INFINITY, f64::min);
    geometric_radii(0.05 * side, 0.25 * side, count)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BallBoxRow {
    pub center: Vec<f64>,
    pub r: f64,
    pub volume: f64,
    pub stderr: f64,
    pub lambda: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BallBoxReport {
    pub rows: Vec<BallBoxRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max_ratio / min_ratio`.
    pub spread: f64,
    pub pass: bool,
}

/// Largest tolerated `max/min` of `|B(x,r)| / Λ(x,r)`.
pub const BALLBOX_SPREAD: f64 = 50.0;

/// `|B(x,r)| / Λ(x,r)` over all centers and radii.
pub fn ballbox_check(
    ctx: &BallContext<'_>,
    centers: &[Vec<f64>],
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<BallBoxReport, MetricError> {
    let mut rows = Vec::new();
    let mut k = 0u64;
    for c in centers {
        let profile = ctx.lambda(c)?;
        for &r in radii {
            let v = ctx.ball_volume(c, r, samples, seed.wrapping_add(k))?;
            k += 1;
            let lambda = profile.eval(r);
            rows.push(BallBoxRow { center: c.clone(), r, volume: v.volume, stderr: v.stderr, lambda, ratio: v.volume / lambda });
        }
    }
    Ok(summarize_ballbox(rows))
}

pub fn summarize_ballbox(rows: Vec<BallBoxRow>) -> BallBoxReport {
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let spread = max_ratio / min_ratio;
    BallBoxReport { rows, min_ratio, max_ratio, spread, pass: spread.is_finite() && spread <= BALLBOX_SPREAD }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DoublingRow {
    pub center: Vec<f64>,
    pub r: f64,
    pub volume_r: f64,
    pub volume_2r: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DoublingReport {
    pub rows: Vec<DoublingRow>,
    /// Largest observed `|B(x,2r)| / |B(x,r)|`.
    pub c3: f64,
    /// Every ratio lies within 20% of the mean ratio.
    pub stable: bool,
}

/// `|B(x,2r)| / |B(x,r)|`; volumes shared between `r` and `2r` are reused.
pub fn doubling_check(
    ctx: &BallContext<'_>,
    centers: &[Vec<f64>],
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<DoublingReport, MetricError> {
    let mut rows = Vec::new();
    let mut k = 0u64;
    for c in centers {
        let mut known: Vec<(f64, f64)> = Vec::new();
        let mut vol = |r: f64, k: &mut u64| -> Result<f64, MetricError> {
            if let Some(&(_, v)) = known.iter().find(|(s, _)| *s == r) {
                return Ok(v);
            }
            let v = ctx.ball_volume(c, r, samples, seed.wrapping_add(*k))?.volume;
            *k += 1;
            known.push((r, v));
            Ok(v)
        };
        for &r in radii {
            let a = vol(r, &mut k)?;
            let b = vol(2.0 * r, &mut k)?;
            rows.push(DoublingRow { center: c.clone(), r, volume_r: a, volume_2r: b, ratio: b / a });
        }
    }
    Ok(summarize_doubling(rows))
}

pub fn summarize_doubling(rows: Vec<DoublingRow>) -> DoublingReport {
    let c3 = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let mean = rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len().max(1) as f64;
    let stable = rows.iter().all(|r| math::abs(r.ratio - mean) <= 0.2 * mean);
    DoublingReport { rows, c3, stable }
}

/// `|B(x, ρ)|` on geometric radii up to `r_max`, from one Monte Carlo run.
/// Below `resolution` the table is replaced by `V(ρ) = V(ρ₀)(ρ/ρ₀)^ν`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct VolumeProfile {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
    pub nu: f64,
    pub resolution: f64,
}

pub const PROFILE_RADII: usize = 32;
/// Minimum number of hits for a tabulated radius to count as resolved.
const RESOLVED_HITS: usize = 400;

impl VolumeProfile {
    pub fn build(oracle: &LocalOracle, r_max: f64, nu: f64, samples: usize, seed: u64) -> VolumeProfile {
        let (lo, hi) = oracle.ball_bounding_box(r_max);
        let vol = box_volume(&lo, &hi);
        let mut d = sample_distances(oracle, &lo, &hi, samples, seed);
        d.sort_by(f64::total_cmp);
        let floor = math::powi(2.0, -12) * r_max;
        let radii = geometric_radii(floor, r_max, PROFILE_RADII);
        let count = |rho: f64| d.partition_point(|&v| v < rho);
        let volumes: Vec<f64> = radii.iter().map(|&rho| vol * count(rho) as f64 / samples as f64).collect();
        // The first radius with enough hits and at least two cells of reach.
        let mut resolution = r_max;
        for (k, &rho) in radii.iter().enumerate() {
            if count(rho) >= RESOLVED_HITS && rho >= 2.0 * oracle_cell_distance(oracle) {
                resolution = radii[k];
                break;
            }
        }
        let mut p = VolumeProfile { center: oracle.frame.center.clone(), radii, volumes, nu, resolution };
        let v0 = p.tabulated(resolution);
        for k in 0..p.radii.len() {
            if p.radii[k] < resolution {
                p.volumes[k] = v0 * math::pow(p.radii[k] / resolution, nu);
            }
        }
        p
    }

    fn tabulated(&self, rho: f64) -> f64 {
        let k = self.radii.partition_point(|&r| r < rho);
        if k < self.radii.len() && self.radii[k] == rho {
            return self.volumes[k];
        }
        self.eval(rho)
    }

    /// Log-linear interpolation of the table, power law below it.
    pub fn eval(&self, rho: f64) -> f64 {
        let (r0, v0) = (self.radii[0], self.volumes[0]);
        if rho <= r0 || v0 == 0.0 {
            let base = self.resolution;
            let k = self.radii.partition_point(|&r| r < base).min(self.radii.len() - 1);
            return self.volumes[k] * math::pow(rho / self.radii[k], self.nu);
        }
        let last = self.radii.len() - 1;
        if rho >= self.radii[last] {
            return self.volumes[last];
        }
        let k = self.radii.partition_point(|&r| r <= rho) - 1;
        let (ra, rb, va, vb) = (self.radii[k], self.radii[k + 1], self.volumes[k], self.volumes[k + 1]);
        if va <= 0.0 || vb <= 0.0 {
            return va + (vb - va) * (rho - ra) / (rb - ra);
        }
        let t = math::ln(rho / ra) / math::ln(rb / ra);
        math::exp(math::ln(va) + t * math::ln(vb / va))
    }
}

/// Distance scale of one lattice cell, measured from the oracle's center.
fn oracle_cell_distance(oracle: &LocalOracle) -> f64 {
    let lat = oracle.oracle.lattice();
    let mut best = f64::INFINITY;
    let c = oracle.frame.center.clone();
    for a in 0..lat.dim() {
        let mut p = c.clone();
        p[a] += lat.spacing[a];
        best = best.min(oracle.distance_to(&p));
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

/// `∫_{B(x,r)} d(x,y)^μ |B(x,d(x,y))|^{−η} dy`, written as the Stieltjes
/// integral `∫_0^r ρ^μ V(ρ)^{−η} dV(ρ)`. The part below the profile
/// resolution uses the power law `V ∝ ρ^ν` and is integrated in closed form.
pub fn kernel_weight_integral(profile: &VolumeProfile, r: f64, mu: f64, eta: f64) -> f64 {
    let nu = profile.nu;
    let rho0 = profile.resolution.min(r);
    let v0 = profile.eval(rho0);
    let expo = mu + nu * (1.0 - eta);
    let inner = if expo > 0.0 {
        nu * math::pow(v0, 1.0 - eta) * math::pow(rho0, mu) / expo
    } else {
        f64::INFINITY
    };
    // Outer part: midpoint rule in log ρ with 256 panels.
    if r <= rho0 {
        let scale = math::pow(r / rho0, expo);
        return inner * scale;
    }
    let panels = 256;
    let q = math::ln(r / rho0) / panels as f64;
    let mut outer = 0.0;
    let mut prev = v0;
    for k in 0..panels {
        let b = rho0 * math::exp(q * (k + 1) as f64);
        let vb = profile.eval(b);
        let mid = rho0 * math::exp(q * (k as f64 + 0.5));
        let vm = profile.eval(mid);
        if vm > 0.0 {
            outer += math::pow(mid, mu) * math::pow(vm, -eta) * (vb - prev);
        }
        prev = vb;
    }
    inner + outer
}

/// Level-set data of the weak-type check.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct WeakTypeRow {
    pub t: f64,
    /// Weighted measure of `{Tf > t}`.
    pub measure: f64,
    /// `t · measure^{1/exponent} / ‖f‖₁`.
    pub ratio: f64,
}

/// Weak-type data for one source `f`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct WeakTypeReport {
    pub exponent: f64,
    pub tuple_degree: usize,
    /// `sup_t t · |{Tf > t}|^{1/exponent} / ‖f‖₁` over the thresholds.
    pub constant: f64,
    pub f_l1: f64,
    pub rows: Vec<WeakTypeRow>,
    /// Least-squares slope of `ln measure` against `ln t` over the upper half
    /// of the thresholds.
    pub decay_slope: f64,
}

/// Thresholds per source.
pub const WEAK_TYPE_THRESHOLDS: usize = 16;

/// Weak-type data for `Tf(x) = ∫ d(x,y)/Λ(x,d(x,y)) f(y) dy` measured with
/// the weight `|λ_I(x)|^{1/(d(I)−1)}` and exponent `d(I)/(d(I)−1)`.
///
/// `f` is sampled on the oracle lattice; `Tf` is evaluated at every node
/// from the distance fields of the nodes in `supp f`. Thresholds run
/// geometrically from the median of `Tf > 0` to `0.95 max Tf`.
pub fn weak_lp_kernel_check(
    oracle: &DistanceOracle,
    basis: &CommutatorBasis,
    tuple: &[usize],
    f: &dyn Fn(&[f64]) -> f64,
) -> Result<WeakTypeReport, MetricError> {
    let lat = oracle.lattice();
    let nn = lat.len();
    let cell = lat.cell_volume();
    let d_i = basis.tuple_degree(tuple);
    if d_i < 2 {
        return Err(MetricError::Lie(LieError::InvalidIndex(d_i)));
    }
    let exponent = d_i as f64 / (d_i as f64 - 1.0);
    let mut p = vec![0.0; lat.dim()];
    let mut fv = vec![0.0; nn];
    for (idx, v) in fv.iter_mut().enumerate() {
        lat.position(idx, &mut p);
        *v = f(&p);
    }
    let f_l1: f64 = fv.iter().map(|v| math::abs(*v)).sum::<f64>() * cell;
    let mut tf = vec![0.0; nn];
    let mut profiles: Vec<Option<LambdaProfile>> = vec![None; nn];
    for y in 0..nn {
        if fv[y] == 0.0 {
            continue;
        }
        lat.position(y, &mut p);
        let field = oracle.field_from(&p)?;
        for x in 0..nn {
            let d = field.dist[x];
            if x == y || !d.is_finite() || d == 0.0 {
                continue;
            }
            if profiles[x].is_none() {
                profiles[x] = Some(basis.lambda_profile(&lat.node(x))?);
            }
            let lam = profiles[x].as_ref().map(|pr| pr.eval(d)).unwrap_or(0.0);
            if lam > 0.0 {
                tf[x] += d / lam * math::abs(fv[y]) * cell;
            }
        }
    }
    let mut weight = vec![0.0; nn];
    for (x, w) in weight.iter_mut().enumerate() {
        let lam = basis.lambda_det(tuple, &lat.node(x))?;
        *w = math::pow(math::abs(lam), 1.0 / (d_i as f64 - 1.0)) * cell;
    }
    let mut sorted: Vec<f64> = tf.iter().cloned().filter(|v| *v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() || !(f_l1 > 0.0) {
        return Err(MetricError::ResolutionInsufficient);
    }
    let t_lo = sorted[sorted.len() / 2];
    let t_hi = 0.95 * sorted[sorted.len() - 1];
    let ts = if t_hi > t_lo { geometric_radii(t_lo, t_hi, WEAK_TYPE_THRESHOLDS) } else { vec![t_lo] };
    let measure = |t: f64| -> f64 { (0..nn).filter(|&x| tf[x] > t).map(|x| weight[x]).sum() };
    let rows: Vec<WeakTypeRow> = ts
        .iter()
        .map(|&t| {
            let m = measure(t);
            WeakTypeRow { t, measure: m, ratio: t * math::pow(m, 1.0 / exponent) / f_l1 }
        })
        .collect();
    let constant = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows[rows.len() / 2..]
        .iter()
        .filter(|r| r.measure > 0.0)
        .map(|r| (math::ln(r.t), math::ln(r.measure)))
        .unzip();
    let decay_slope = if lx.len() >= 2 { math::slope(&lx, &ly) } else { f64::NAN };
    Ok(WeakTypeReport { exponent, tuple_degree: d_i, constant, f_l1, rows, decay_slope })
}

/// Weak-type constants for bumps of radius `radii[k]` at `center`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct WeakTypeSuite {
    pub tuple: Vec<usize>,
    pub exponent: f64,
    pub radii: Vec<f64>,
    pub sources: Vec<WeakTypeReport>,
    pub constant: f64,
    /// Largest constant over the constant of the widest source.
    pub growth: f64,
    pub pass: bool,
}

/// Runs [`weak_lp_kernel_check`] for radial bumps `exp(−1/(1−|y−c|²/r²))`
/// with shrinking `r`; the constant must stay within a factor 2 of the
/// widest source's constant.
pub fn weak_type_suite(
    oracle: &DistanceOracle,
    basis: &CommutatorBasis,
    tuple: &[usize],
    center: &[f64],
    radii: &[f64],
) -> Result<WeakTypeSuite, MetricError> {
    let mut sources = Vec::new();
    for &r in radii {
        let f = |y: &[f64]| {
            let r2: f64 = y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (r * r);
            if r2 < 1.0 {
                math::exp(-1.0 / (1.0 - r2))
            } else {
                0.0
            }
        };
        sources.push(weak_lp_kernel_check(oracle, basis, tuple, &f)?);
    }
    let first = sources.first().map(|s| s.constant).unwrap_or(f64::NAN);
    let constant = sources.iter().map(|s| s.constant).fold(0.0, f64::max);
    let growth = constant / first;
    let pass = constant.is_finite() && constant > 0.0 && growth <= 2.0;
    let exponent = sources.first().map(|s| s.exponent).unwrap_or(f64::NAN);
    Ok(WeakTypeSuite { tuple: tuple.to_vec(), exponent, radii: radii.to_vec(), sources, constant, growth, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_radii_endpoints() {
        let r = geometric_radii(0.05, 0.25, 5);
        assert!((r[0] - 0.05).abs() < 1e-15 && (r[4] - 0.25).abs() < 1e-15);
        assert!((r[1] / r[0] - r[3] / r[2]).abs() < 1e-12);
    }

    #[test]
    fn profile_power_law_below_table() {
        let radii = geometric_radii(0.01, 1.0, 8);
        let volumes: Vec<f64> = radii.iter().map(|r| 3.0 * r * r).collect();
        let p = VolumeProfile { center: vec![0.0, 0.0], radii, volumes, nu: 2.0, resolution: 0.01 };
        assert!((p.eval(0.001) - 3e-6).abs() < 1e-15);
        assert!((p.eval(0.3) / 0.27 - 1.0).abs() < 1e-12);
        // dV = 6ρ dρ, ρ/(3ρ²) · 6ρ = 2
        let k = kernel_weight_integral(&p, 1.0, 1.0, 1.0);
        assert!((k - 2.0).abs() < 1e-3, "{k}");
    }
}
