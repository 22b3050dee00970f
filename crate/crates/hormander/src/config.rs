//! Run configuration, read from TOML and echoed into every report.

use std::path::Path;

use hormander_core::dsl::parse_expr;
use hormander_core::system::DomainSpec;
use serde::{Deserialize, Serialize};

use crate::error::RunError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Gallery name or path of a `.vf` file.
    pub model: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub lab: LabConfig,
    #[serde(default, rename = "suite", skip_serializing_if = "Vec::is_empty")]
    pub suites: Vec<SuiteConfig>,
}

fn default_out() -> String {
    "out".into()
}

/// A box `[lo, hi]`, optionally cut to `{indicator < 0}` or to the ball of
/// radius `ball` about the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lo: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator: Option<String>,
}

impl DomainConfig {
    pub fn build(&self, dim: usize) -> Result<DomainSpec, RunError> {
        if let Some(r) = self.ball {
            if !(r > 0.0) {
                return Err(RunError::Config(format!("ball radius {r} must be positive")));
            }
            return Ok(DomainSpec::ball(dim, r));
        }
        if self.lo.len() != dim || self.hi.len() != dim {
            return Err(RunError::Config(format!("domain lo/hi must have {dim} entries")));
        }
        let mut d = DomainSpec::new(self.lo.clone(), self.hi.clone(), "box")
            .map_err(|e| RunError::Config(format!("domain: {e}")))?;
        if let Some(src) = &self.indicator {
            let g = parse_expr(src, dim).map_err(|e| RunError::Config(format!("domain indicator: {e}")))?;
            d = d.with_indicator(g);
            d.label = format!("box cut by {src} < 0");
        }
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    pub steps: usize,
}

impl Default for OracleConfig {
    fn default() -> OracleConfig {
        OracleConfig { h: 1.0 / 32.0, directions: None, steps: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Monte Carlo samples per ball.
    pub samples: usize,
    /// Largest bracket depth tried when the model declares no step.
    pub tuple_cap: usize,
    /// Sampling grid nodes per axis for the index computations.
    pub grid: usize,
    /// Quadrature cells per axis; the dimension default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_nodes: Option<usize>,
    pub node_cap: u64,
}

impl Default for Budgets {
    fn default() -> Budgets {
        Budgets { samples: 200_000, tuple_cap: 4, grid: 33, quad_nodes: None, node_cap: 2_000_000 }
    }
}

/// Defaults shared by the suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    pub k: u32,
    /// Rational as `"n/d"` or an integer string.
    pub p: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_override: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_override: Option<String>,
    /// Concentration point of the families; the origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<Vec<f64>>,
}

impl Default for LabConfig {
    fn default() -> LabConfig {
        LabConfig { k: 1, p: "2".into(), q_override: None, exponent_override: None, focus: None }
    }
}

/// One `[[suite]]` entry; absent fields fall back to `[lab]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_override: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_override: Option<String>,
    /// Sharpness probe exponent of the Sobolev suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s2: Option<String>,
    /// `γ` of the critical log-Sobolev case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuple: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shapes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halvings: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
}

impl SuiteConfig {
    pub fn named(name: &str) -> SuiteConfig {
        SuiteConfig { name: name.into(), ..SuiteConfig::default() }
    }
}

impl RunConfig {
    pub fn for_model(model: &str) -> RunConfig {
        RunConfig {
            model: model.into(),
            seed: 0,
            out: default_out(),
            domain: None,
            oracle: OracleConfig::default(),
            budgets: Budgets::default(),
            lab: LabConfig::default(),
            suites: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
