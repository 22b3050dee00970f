//! Oracle dump files: the lattice, parameters and edge list of a built
//! distance graph, enough to answer queries without rebuilding it.

use std::path::Path;

use hormander_core::dsl::parse_expr;
use hormander_core::metric::{DistanceOracle, Flow, Lattice, OracleParams};
use hormander_core::system::{DomainSpec, VectorFieldSystem};
use hormander_core::parse_system;
use serde::{Deserialize, Serialize};

use crate::error::RunError;

pub const DUMP_FORMAT: &str = "hormander-oracle";
pub const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpedDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub indicator: Option<String>,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleDump {
    pub format: String,
    pub version: u32,
    pub model_source: String,
    pub domain: DumpedDomain,
    pub params: OracleParams,
    pub lattice: Lattice,
    pub s_max: usize,
    pub edges: Vec<(u32, u32, f64)>,
}

impl OracleDump {
    pub fn capture(oracle: &DistanceOracle, sys: &VectorFieldSystem) -> OracleDump {
        let d = oracle.domain();
        OracleDump {
            format: DUMP_FORMAT.into(),
            version: DUMP_VERSION,
            model_source: sys.to_source(),
            domain: DumpedDomain {
                lo: d.lo.clone(),
                hi: d.hi.clone(),
                indicator: d.indicator.as_ref().map(|g| g.to_string()),
                label: d.label.clone(),
            },
            params: oracle.params().clone(),
            lattice: oracle.lattice().clone(),
            s_max: oracle.s_max(),
            edges: oracle.edges(),
        }
    }

    /// The system and oracle stored in the dump.
    pub fn restore(&self) -> Result<(VectorFieldSystem, DistanceOracle), RunError> {
        if self.format != DUMP_FORMAT || self.version != DUMP_VERSION {
            return Err(RunError::Config(format!(
                "unsupported oracle dump {} v{} (expected {DUMP_FORMAT} v{DUMP_VERSION})",
                self.format, self.version
            )));
        }
        let sys = parse_system(&self.model_source).map_err(|e| RunError::Model(e.to_string()))?;
        let n = sys.dim();
        let mut domain = DomainSpec::new(self.domain.lo.clone(), self.domain.hi.clone(), &self.domain.label)
            .map_err(|e| RunError::Config(format!("dump domain: {e}")))?;
        if let Some(src) = &self.domain.indicator {
            domain.indicator = Some(parse_expr(src, n).map_err(|e| RunError::Config(format!("dump indicator: {e}")))?);
        }
        let nn = self.lattice.len() as u32;
        if self.edges.iter().any(|&(u, v, w)| u >= nn || v >= nn || !(w >= 0.0)) {
            return Err(RunError::Config("dump edge list references nodes outside the lattice".into()));
        }
        let flow = Flow::new(&sys, self.params.steps_per_edge);
        let oracle = DistanceOracle::from_edges(
            flow,
            self.lattice.clone(),
            domain,
            self.params.clone(),
            self.s_max,
            &self.edges,
        );
        Ok((sys, oracle))
    }

    pub fn write(&self, path: &Path) -> Result<(), RunError> {
        let text = serde_json::to_string(self).map_err(|e| RunError::Io(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<OracleDump, RunError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }
}
