//! Report files. The JSON body depends only on the configuration and the
//! code version; the wall-clock time goes in a `.meta.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hormander_core::lab::Verdict;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::RunError;
use crate::session::{AnalyzeRecord, BallVolumeRecord, DistanceRecord, Session, SuiteRecord};

pub const SCHEMA: &str = "hormander-report/1";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Record {
    Analyze(AnalyzeRecord),
    Distance(DistanceRecord),
    BallVolume(BallVolumeRecord),
    Suite(SuiteRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelEcho {
    pub name: String,
    pub source: String,
    pub domain: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub code_version: &'static str,
    pub config: RunConfig,
    pub model: ModelEcho,
    pub records: Vec<Record>,
}

#[derive(Serialize)]
struct Meta<'a> {
    report: &'a str,
    generated_unix_seconds: u64,
    code_version: &'static str,
}

impl Report {
    pub fn new(session: &Session) -> Report {
        Report {
            schema: SCHEMA,
            code_version: CODE_VERSION,
            config: session.config.clone(),
            model: ModelEcho {
                name: session.model_name.clone(),
                source: session.source.clone(),
                domain: session.domain.label.clone(),
            },
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn suites(&self) -> impl Iterator<Item = &SuiteRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Suite(s) => Some(s),
            _ => None,
        })
    }

    /// FAIL dominates FLAG; no suites counts as PASS.
    pub fn overall(&self) -> Verdict {
        let mut out = Verdict::Pass;
        for s in self.suites() {
            match s.verdict {
                Verdict::Fail => return Verdict::Fail,
                Verdict::Flag => out = Verdict::Flag,
                Verdict::Pass => {}
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `<stem>.json`, `<stem>.meta.json` and one `<stem>-<suite>.csv`
    /// per suite record; returns the JSON path.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf, RunError> {
        fs::create_dir_all(dir)?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, self.to_json())?;
        for s in self.suites() {
            let path = if self.suites().count() == 1 {
                dir.join(format!("{stem}.csv"))
            } else {
                dir.join(format!("{stem}-{}.csv", s.suite))
            };
            fs::write(path, suite_csv(s)?)?;
        }
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let name = format!("{stem}.json");
        let meta = Meta { report: &name, generated_unix_seconds: secs, code_version: CODE_VERSION };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| RunError::Io(e.to_string()))?;
        fs::write(dir.join(format!("{stem}.meta.json")), text + "\n")?;
        Ok(json)
    }
}

pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 2,
        Verdict::Flag => 3,
    }
}

/// Family parameter against ratio, one row per member.
pub fn suite_csv(s: &SuiteRecord) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| RunError::Io(e.to_string());
    w.write_record(["member", "label", "parameter", "ratio", "drift"]).map_err(io)?;
    for r in &s.table {
        w.write_record([
            r.member.to_string(),
            r.label.clone(),
            r.parameter.to_string(),
            r.ratio.to_string(),
            r.drift.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RunError::Io(e.to_string()))
}
