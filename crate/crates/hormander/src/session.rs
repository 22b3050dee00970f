//! A loaded model with its domain and bracket basis, and the commands that
//! run against it.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use hormander_core::exponents::{critical_exponents, rational_from_f64, Embedding};
use hormander_core::geometry::{ballbox_check, doubling_check, weak_type_suite, BallContext};
use hormander_core::lab::{self, Focus, GnVariant, InequalityReport, LabContext, Member, QuadPlan, ShapeFamily, Verdict};
use hormander_core::lie::{
    discover_basis, metivier_index, nu_histogram, HormanderReport, SamplingPlan, Witness, DEFAULT_ZERO_TOL,
};
use hormander_core::metric::{DistanceOracle, LocalFrame, OracleParams};
use hormander_core::{parse_system, CommutatorBasis, DomainSpec, IndexReport, Rational, VectorFieldSystem};
use serde::Serialize;

use crate::config::{RunConfig, SuiteConfig};
use crate::error::RunError;
use crate::gallery;

/// Suites accepted by `verify`.
pub const SUITES: [&str; 14] = [
    "sobolev",
    "gagliardo-nirenberg",
    "nash",
    "moser",
    "isoperimetric",
    "log-sobolev",
    "holder",
    "moser-trudinger",
    "poincare",
    "representation",
    "weak-type",
    "rayleigh",
    "ball-box",
    "doubling",
];

pub struct Session {
    pub config: RunConfig,
    pub model_name: String,
    pub source: String,
    pub sys: VectorFieldSystem,
    pub domain: DomainSpec,
    pub basis: CommutatorBasis,
    pub hormander: HormanderReport,
    index: OnceCell<IndexReport>,
    oracle: OnceCell<DistanceOracle>,
}

pub fn parse_rational(s: &str) -> Result<Rational, RunError> {
    let t = s.trim();
    Rational::from_str(t)
        .ok()
        .or_else(|| t.parse::<f64>().ok().and_then(rational_from_f64))
        .ok_or_else(|| RunError::Config(format!("'{s}' is not a rational number")))
}

fn rat_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HormanderRecord {
    pub holds: bool,
    pub step: Option<usize>,
    pub failing_point: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NuSample {
    pub point: Vec<f64>,
    pub nu: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddingRow {
    pub k: u32,
    #[serde(serialize_with = "hormander_core::exponents::ser_rational")]
    pub p: Rational,
    pub embedding: Embedding,
    pub summary: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyzeRecord {
    pub dim: usize,
    pub fields: usize,
    pub domain: String,
    pub hormander: HormanderRecord,
    pub basis_size: usize,
    pub nu_tilde: usize,
    pub q: usize,
    pub nu_min: usize,
    pub s_max: usize,
    pub nu_tilde_witness: Witness,
    pub q_witness: Witness,
    pub sample_count: usize,
    pub nu_histogram: Vec<(usize, usize)>,
    /// Every sample when there are at most `NU_SAMPLE_LIMIT`, otherwise a
    /// strided subset followed by the points where `ν` exceeds its minimum.
    pub nu_samples: Vec<NuSample>,
    pub nu_sample_stride: usize,
    pub embeddings: Vec<EmbeddingRow>,
}

pub const NU_SAMPLE_LIMIT: usize = 4096;

/// Shape family length of `verify isoperimetric`; shapes are cheap, and a
/// longer sweep separates slow blow-up from noise under the growth rule.
pub const ISO_HALVINGS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceRecord {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub distance: f64,
    pub error_bound: f64,
    pub h: f64,
    pub nodes: usize,
    pub edges: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geodesic: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallVolumeRecord {
    pub center: Vec<f64>,
    pub r: f64,
    pub volume: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub lambda: f64,
    pub ratio: f64,
}

/// One row of a suite's plot table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub member: usize,
    pub label: String,
    pub parameter: f64,
    pub ratio: f64,
    pub drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteRecord {
    pub suite: String,
    pub verdict: Verdict,
    pub constant: f64,
    pub exponents: BTreeMap<String, String>,
    /// `paper-exact`, `override` or `empirical` for every reported number.
    pub provenance: BTreeMap<String, String>,
    pub notes: Vec<String>,
    pub table: Vec<TableRow>,
    pub detail: serde_json::Value,
}

fn detail<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

impl SuiteRecord {
    fn from_lab(rep: &InequalityReport, overrides: &[&str]) -> SuiteRecord {
        let mut provenance = BTreeMap::new();
        for key in rep.exponents.keys() {
            let tag = if overrides.contains(&key.as_str()) { "override" } else { "paper-exact" };
            provenance.insert(format!("exponent:{key}"), tag.to_string());
        }
        provenance.insert("constant".into(), "empirical".into());
        for key in rep.extras.keys() {
            provenance.insert(format!("extra:{key}"), "empirical".into());
        }
        let table = rep
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| TableRow {
                member: i,
                label: r.label.clone(),
                parameter: r.params.first().map(|p| p.1).unwrap_or(f64::NAN),
                ratio: r.ratio,
                drift: r.drift,
            })
            .collect();
        SuiteRecord {
            suite: rep.suite.clone(),
            verdict: rep.verdict,
            constant: rep.constant,
            exponents: rep.exponents.clone(),
            provenance,
            notes: rep.notes.clone(),
            table,
            detail: detail(rep),
        }
    }
}

fn verdict_of(pass: bool) -> Verdict {
    if pass {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

impl Session {
    pub fn open(config: RunConfig) -> Result<Session, RunError> {
        let (model_name, source) = match gallery::builtin(&config.model) {
            Some(src) => (config.model.clone(), src.to_string()),
            None => {
                let path = Path::new(&config.model);
                let src = std::fs::read_to_string(path).map_err(|e| {
                    RunError::Model(format!(
                        "'{}' is neither a gallery model ({}) nor a readable file: {e}",
                        config.model,
                        gallery::names().collect::<Vec<_>>().join(", ")
                    ))
                })?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
                (stem, src)
            }
        };
        let sys = parse_system(&source).map_err(|e| RunError::Model(e.to_string()))?;
        let domain = match &config.domain {
            Some(d) => d.build(sys.dim())?,
            None => gallery::default_domain(&model_name, sys.dim()),
        };
        let plan = SamplingPlan::with_grid(config.budgets.grid);
        let (basis, hormander) = discover_basis(&sys, &domain, &plan, config.budgets.tuple_cap)?;
        Ok(Session {
            config,
            model_name,
            source,
            sys,
            domain,
            basis,
            hormander,
            index: OnceCell::new(),
            oracle: OnceCell::new(),
        })
    }

    fn plan(&self) -> SamplingPlan {
        SamplingPlan::with_grid(self.config.budgets.grid)
    }

    pub fn index(&self) -> Result<&IndexReport, RunError> {
        if let Some(ix) = self.index.get() {
            return Ok(ix);
        }
        let ix = metivier_index(&self.basis, &self.domain, &self.plan(), self.sys.is_polynomial())?;
        Ok(self.index.get_or_init(|| ix))
    }

    pub fn nu_tilde(&self) -> Result<u32, RunError> {
        Ok(self.index()?.nu_tilde as u32)
    }

    pub fn oracle_params(&self) -> OracleParams {
        let o = &self.config.oracle;
        let mut p = OracleParams::with_h(o.h);
        p.directions = o.directions;
        p.steps_per_edge = o.steps;
        p.node_cap = self.config.budgets.node_cap;
        p
    }

    pub fn oracle(&self) -> Result<&DistanceOracle, RunError> {
        if let Some(o) = self.oracle.get() {
            return Ok(o);
        }
        let o = DistanceOracle::build(&self.sys, &self.domain, &self.oracle_params(), self.basis.s0())?;
        Ok(self.oracle.get_or_init(|| o))
    }

    /// Uses a previously built oracle (e.g. one read from a dump).
    pub fn set_oracle(&mut self, oracle: DistanceOracle) {
        self.oracle = OnceCell::new();
        let _ = self.oracle.set(oracle);
    }

    pub fn focus(&self) -> Result<Focus, RunError> {
        let n = self.sys.dim();
        let point = self.config.lab.focus.clone().unwrap_or_else(|| vec![0.0; n]);
        if point.len() != n || !self.domain.contains(&point) {
            return Err(RunError::Config(format!("focus {point:?} is not an interior point of the domain")));
        }
        let frame = LocalFrame::at(&self.basis, &point, DEFAULT_ZERO_TOL)?;
        Ok(Focus { point, weights: frame.weight })
    }

    pub fn lab_context(&self) -> Result<LabContext<'_>, RunError> {
        let mut ctx = LabContext::new(&self.sys, &self.domain, self.nu_tilde()?, self.focus()?);
        if let Some(nodes) = self.config.budgets.quad_nodes {
            ctx.plan = QuadPlan::with_nodes(nodes);
        }
        ctx.seed = self.config.seed;
        Ok(ctx)
    }

    pub fn analyze(&self) -> Result<AnalyzeRecord, RunError> {
        let ix = self.index()?;
        let nu_min = ix.nu_min();
        let total = ix.nu_pointwise.len();
        let stride = total.div_ceil(NU_SAMPLE_LIMIT).max(1);
        let mut nu_samples: Vec<NuSample> = ix
            .nu_pointwise
            .iter()
            .step_by(stride)
            .map(|(p, v)| NuSample { point: p.clone(), nu: *v })
            .collect();
        if stride > 1 {
            nu_samples.extend(
                ix.nu_pointwise
                    .iter()
                    .filter(|(_, v)| *v > nu_min)
                    .take(NU_SAMPLE_LIMIT)
                    .map(|(p, v)| NuSample { point: p.clone(), nu: *v }),
            );
        }
        let p = parse_rational(&self.config.lab.p)?;
        let mut embeddings = Vec::new();
        let top = self.config.lab.k.max(3);
        for k in 1..=top {
            let e = critical_exponents(ix.nu_tilde as u32, k, p)?;
            embeddings.push(EmbeddingRow { k, p, embedding: e, summary: e.to_string() });
        }
        Ok(AnalyzeRecord {
            dim: self.sys.dim(),
            fields: self.sys.count(),
            domain: self.domain.label.clone(),
            hormander: HormanderRecord {
                holds: self.hormander.holds,
                step: self.hormander.s_max,
                failing_point: self.hormander.witness.clone(),
            },
            basis_size: self.basis.len(),
            nu_tilde: ix.nu_tilde,
            q: ix.q,
            nu_min,
            s_max: ix.s_max,
            nu_tilde_witness: ix.nu_tilde_witness.clone(),
            q_witness: ix.q_witness.clone(),
            sample_count: ix.sample_count,
            nu_histogram: nu_histogram(ix),
            nu_samples,
            nu_sample_stride: stride,
            embeddings,
        })
    }

    pub fn distance(&self, x: &[f64], y: &[f64], geodesic: bool) -> Result<DistanceRecord, RunError> {
        let n = self.sys.dim();
        if x.len() != n || y.len() != n {
            return Err(RunError::Config(format!("points must have {n} coordinates")));
        }
        let o = self.oracle()?;
        let field = o.field_from(x)?;
        let (d, path) = o.distance_with(&field, y)?;
        Ok(DistanceRecord {
            x: x.to_vec(),
            y: y.to_vec(),
            distance: d,
            error_bound: o.error_bound(),
            h: o.h(),
            nodes: o.node_count(),
            edges: o.edge_count(),
            geodesic: geodesic.then_some(path),
        })
    }

    pub fn ball_volume(&self, center: &[f64], r: f64) -> Result<BallVolumeRecord, RunError> {
        if center.len() != self.sys.dim() || !(r > 0.0) {
            return Err(RunError::Config("ball-volume needs a center in the domain and r > 0".into()));
        }
        let ctx = BallContext::new(&self.sys, &self.basis, &self.domain);
        let v = ctx.ball_volume(center, r, self.config.budgets.samples, self.config.seed)?;
        let lambda = ctx.lambda(center)?.eval(r);
        Ok(BallVolumeRecord {
            center: v.center.clone(),
            r,
            volume: v.volume,
            stderr: v.stderr,
            samples: v.samples,
            seed: v.seed,
            lambda,
            ratio: v.volume / lambda,
        })
    }

    fn suite_k_p(&self, s: &SuiteConfig) -> Result<(u32, Rational), RunError> {
        let k = s.k.unwrap_or(self.config.lab.k);
        let p = parse_rational(s.p.as_deref().unwrap_or(&self.config.lab.p))?;
        Ok((k, p))
    }

    fn opt_rational(&self, a: &Option<String>, b: &Option<String>) -> Result<Option<Rational>, RunError> {
        a.as_ref().or(b.as_ref()).map(|s| parse_rational(s)).transpose()
    }

    fn half_side(&self) -> f64 {
        (0..self.sys.dim()).map(|a| 0.5 * (self.domain.hi[a] - self.domain.lo[a])).fold(f64::INFINITY, f64::min)
    }

    /// Runs one suite; regime violations and unknown names are errors.
    pub fn verify(&self, s: &SuiteConfig) -> Result<SuiteRecord, RunError> {
        let name = s.name.as_str();
        if !SUITES.contains(&name) {
            return Err(RunError::UnknownSuite(name.to_string()));
        }
        match name {
            "ball-box" | "doubling" => return self.volume_suite(s),
            "weak-type" => return self.weak_type(s),
            _ => {}
        }
        let ctx = self.lab_context()?;
        let family = ctx.family();
        let (k, p) = self.suite_k_p(s)?;
        match name {
            "sobolev" => {
                let q = self.opt_rational(&s.q_override, &self.config.lab.q_override)?;
                let probe = s.q_prime.map(|q| lab::ProbeSettings { q_prime: Some(q), halvings: s.halvings.unwrap_or(4) });
                let rep = lab::sobolev_suite(&ctx, k, p, q, &family, probe)?;
                let overrides: &[&str] = if q.is_some() { &["q"] } else { &[] };
                let mut rec = SuiteRecord::from_lab(&rep, overrides);
                if rep.exponents.contains_key("q_probe") {
                    rec.provenance.insert("exponent:q_probe".into(), "override".into());
                }
                Ok(rec)
            }
            "gagliardo-nirenberg" | "nash" | "moser" => {
                let variant = match name {
                    "nash" => GnVariant::Nash,
                    "moser" => GnVariant::Moser,
                    _ => {
                        let s1 = parse_rational(s.s1.as_deref().unwrap_or("1"))?;
                        let s2 = parse_rational(s.s2.as_deref().unwrap_or("2"))?;
                        GnVariant::GagliardoNirenberg { k, p, s1, s2 }
                    }
                };
                let overrides: &[&str] = match variant {
                    GnVariant::GagliardoNirenberg { .. } => &["s1", "s2"],
                    _ => &[],
                };
                let rep = lab::gn_nash_moser_suite(&ctx, variant, &family)?;
                Ok(SuiteRecord::from_lab(&rep, overrides))
            }
            "isoperimetric" => {
                let e = self.opt_rational(&s.exponent_override, &self.config.lab.exponent_override)?;
                let shapes = match s.shapes.as_deref().unwrap_or("disks") {
                    "disks" => ShapeFamily::Disks,
                    "anisotropic" => ShapeFamily::Anisotropic,
                    other => return Err(RunError::Config(format!("unknown shape family '{other}'"))),
                };
                let rep = lab::isoperimetric_suite(&ctx, e, shapes, s.halvings.unwrap_or(ISO_HALVINGS))?;
                let overrides: &[&str] = if e.is_some() { &["exponent"] } else { &[] };
                let mut rec = SuiteRecord::from_lab(&rep, overrides);
                if let (Some(d), Some(m)) = (rep.extras.get("decay"), rep.extras.get("decay_monotone")) {
                    let shape = if *m > 0.5 { "monotone" } else { "not monotone" };
                    rec.notes.push(format!("quotient decays by a factor {d:.3} from the largest to the smallest shape ({shape})"));
                }
                Ok(rec)
            }
            "log-sobolev" => {
                let gamma = s.gamma.as_deref().map(parse_rational).transpose()?;
                let nu = Rational::from_integer(i64::from(ctx.nu_tilde));
                let kp = Rational::from_integer(i64::from(k)) * p;
                let q = if kp == nu { Some(gamma.unwrap_or(Rational::from_integer(2)) * p) } else { None };
                let sob = lab::sobolev_suite(&ctx, k, p, q, &family, None)?;
                let rep = lab::log_sobolev_suite(&ctx, k, p, sob.constant, gamma.or(q.map(|_| Rational::from_integer(2))), &family)?;
                Ok(SuiteRecord::from_lab(&rep, &[]))
            }
            "holder" => {
                let rep = lab::holder_suite(&ctx, self.oracle()?, k, p, &family)?;
                Ok(SuiteRecord::from_lab(&rep, &[]))
            }
            "moser-trudinger" => {
                let sigmas = s.sigmas.clone().unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0]);
                let nodes = if self.sys.dim() <= 2 { 1024 } else { 128 };
                let omega = lab::domain_volume(&self.domain, nodes);
                let rep = lab::moser_trudinger_suite(&ctx, &sigmas, lab::MT_MULTIPLE, omega, &family)?;
                Ok(SuiteRecord::from_lab(&rep, &[]))
            }
            "poincare" => {
                let mut fam: Vec<Member> = family;
                let powers = lab::default_plateau_powers(self.sys.dim());
                fam.extend(lab::plateau_family(&self.domain, &ctx.focus.point, &powers));
                let rep = lab::poincare_check(&ctx, rat_f64(p), &fam)?;
                Ok(SuiteRecord::from_lab(&rep, &[]))
            }
            "representation" => {
                let rep = lab::representation_check(&ctx, self.oracle()?, &self.basis, &family)?;
                Ok(SuiteRecord::from_lab(&rep, &[]))
            }
            "rayleigh" => {
                let bound = lab::rayleigh_bound(&ctx, &family)?;
                let mut provenance = BTreeMap::new();
                provenance.insert("constant".into(), "empirical".into());
                provenance.insert("exponent:nu_tilde".into(), "paper-exact".into());
                let mut exponents = BTreeMap::new();
                exponents.insert("nu_tilde".into(), ctx.nu_tilde.to_string());
                Ok(SuiteRecord {
                    suite: "rayleigh".into(),
                    verdict: verdict_of(bound.is_finite() && bound > 0.0),
                    constant: bound,
                    exponents,
                    provenance,
                    notes: vec!["upper bound on the first eigenvalue of the nu_tilde-Laplacian".into()],
                    table: Vec::new(),
                    detail: serde_json::Value::Null,
                })
            }
            _ => unreachable!("suite list checked above"),
        }
    }

    fn volume_suite(&self, s: &SuiteConfig) -> Result<SuiteRecord, RunError> {
        let ctx = BallContext::new(&self.sys, &self.basis, &self.domain);
        let centers = match &s.centers {
            Some(c) => c.clone(),
            None => vec![self.focus()?.point],
        };
        let scale = self.half_side();
        let samples = self.config.budgets.samples;
        let seed = self.config.seed;
        let mut provenance = BTreeMap::new();
        provenance.insert("constant".into(), "empirical".into());
        if s.name == "ball-box" {
            let radii = s.radii.clone().unwrap_or_else(|| vec![0.05 * scale, 0.1 * scale, 0.2 * scale]);
            let rep = ballbox_check(&ctx, &centers, &radii, samples, seed)?;
            let table = rep
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| TableRow { member: i, label: format!("B({:?},{})", r.center, r.r), parameter: r.r, ratio: r.ratio, drift: r.stderr / r.volume })
                .collect();
            Ok(SuiteRecord {
                suite: "ball-box".into(),
                verdict: verdict_of(rep.pass),
                constant: rep.spread,
                exponents: BTreeMap::new(),
                provenance,
                notes: vec![format!("|B|/Lambda in [{:.4e}, {:.4e}]", rep.min_ratio, rep.max_ratio)],
                table,
                detail: detail(&rep),
            })
        } else {
            let radii = s.radii.clone().unwrap_or_else(|| vec![0.05 * scale, 0.1 * scale]);
            let rep = doubling_check(&ctx, &centers, &radii, samples, seed)?;
            let table = rep
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| TableRow { member: i, label: format!("B({:?},{})", r.center, r.r), parameter: r.r, ratio: r.ratio, drift: 0.0 })
                .collect();
            Ok(SuiteRecord {
                suite: "doubling".into(),
                verdict: verdict_of(rep.stable && rep.c3.is_finite()),
                constant: rep.c3,
                exponents: BTreeMap::new(),
                provenance,
                notes: Vec::new(),
                table,
                detail: detail(&rep),
            })
        }
    }

    /// The first tuple of generators with nonzero determinant at `x`, or the
    /// tuple attaining `ν̃`.
    fn weak_type_tuple(&self, x: &[f64]) -> Result<Vec<usize>, RunError> {
        let (n, m) = (self.sys.dim(), self.sys.count());
        let mut t: Vec<usize> = (0..n).collect();
        if n <= m {
            loop {
                if self.basis.lambda_det(&t, x)?.abs() > DEFAULT_ZERO_TOL {
                    return Ok(t);
                }
                // Next increasing combination of `n` out of `m`.
                let mut i = n;
                while i > 0 && t[i - 1] == m - n + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                t[i - 1] += 1;
                for j in i..n {
                    t[j] = t[j - 1] + 1;
                }
            }
        }
        Ok(self.index()?.nu_tilde_witness.tuple.clone())
    }

    fn weak_type(&self, s: &SuiteConfig) -> Result<SuiteRecord, RunError> {
        let n = self.sys.dim();
        let half = self.half_side();
        let center: Vec<f64> = match &s.centers {
            Some(c) if !c.is_empty() => c[0].clone(),
            _ => {
                let f = self.focus()?.point;
                (0..n).map(|a| f[a] + half * [0.3, 0.2, 0.1][a.min(2)]).collect()
            }
        };
        let radii = s.radii.clone().unwrap_or_else(|| vec![0.4 * half, 0.2 * half, 0.1 * half]);
        let reach = radii.iter().cloned().fold(0.0, f64::max);
        let probe: Vec<Vec<f64>> = (0..n)
            .flat_map(|a| {
                [-1.0, 1.0].map(|sg| {
                    let mut y = center.clone();
                    y[a] += sg * reach;
                    y
                })
            })
            .collect();
        if !probe.iter().all(|y| self.domain.contains(y)) {
            return Err(RunError::Config(format!("weak-type sources about {center:?} leave the domain")));
        }
        let tuple = match &s.tuple {
            Some(t) => t.clone(),
            None => self.weak_type_tuple(&center)?,
        };
        if tuple.len() != n || tuple.iter().any(|&i| i >= self.basis.len()) {
            return Err(RunError::Config(format!("tuple {tuple:?} must list {n} basis indices")));
        }
        let rep = weak_type_suite(self.oracle()?, &self.basis, &tuple, &center, &radii)?;
        let mut exponents = BTreeMap::new();
        let d = self.basis.tuple_degree(&tuple) as i64;
        exponents.insert("tuple_degree".into(), d.to_string());
        exponents.insert("exponent".into(), Rational::new(d, d - 1).to_string());
        let mut provenance = BTreeMap::new();
        provenance.insert("exponent:tuple_degree".into(), "paper-exact".into());
        provenance.insert("exponent:exponent".into(), "paper-exact".into());
        provenance.insert("constant".into(), "empirical".into());
        provenance.insert("extra:decay_slope".into(), "empirical".into());
        let table = rep
            .sources
            .iter()
            .zip(&radii)
            .enumerate()
            .map(|(i, (src, r))| TableRow { member: i, label: format!("source(r={r})"), parameter: *r, ratio: src.constant, drift: 0.0 })
            .collect();
        let slopes: Vec<String> = rep.sources.iter().map(|s| format!("{:.3}", s.decay_slope)).collect();
        Ok(SuiteRecord {
            suite: "weak-type".into(),
            verdict: verdict_of(rep.pass),
            constant: rep.constant,
            exponents,
            provenance,
            notes: vec![
                format!("tuple {:?}, constant growth {:.3} over shrinking sources", tuple, rep.growth),
                format!("level-set decay slopes {} (reference -{})", slopes.join(", "), rep.exponent),
            ],
            table,
            detail: detail(&rep),
        })
    }
}
