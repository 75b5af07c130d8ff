//! Versioned JSON verification reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::expr::{ZeroConfig, ZeroError, ZeroVerdict};

pub const SCHEMA: &str = "sf-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Proven,
    Likely,
    Failed,
    Inconclusive,
    Skipped,
}

impl Verdict {
    /// Skipped checks were not executed and do not count against a run.
    pub fn passed(self) -> bool {
        matches!(self, Verdict::Proven | Verdict::Likely | Verdict::Skipped)
    }

    pub fn from_zero(v: &ZeroVerdict) -> Verdict {
        match v {
            ZeroVerdict::ProvenZero => Verdict::Proven,
            ZeroVerdict::LikelyZero { .. } => Verdict::Likely,
            ZeroVerdict::NonZero { .. } => Verdict::Failed,
        }
    }

    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Likely
        } else {
            Verdict::Failed
        }
    }

    /// The weakest of two verdicts: failed beats inconclusive beats
    /// likely beats proven; skipped is neutral.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        let rank = |v: Verdict| match v {
            Skipped => 0,
            Proven => 1,
            Likely => 2,
            Inconclusive => 3,
            Failed => 4,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }

    pub fn all(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
        vs.into_iter().fold(Verdict::Proven, Verdict::and)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Proven => "proven",
            Verdict::Likely => "likely",
            Verdict::Failed => "failed",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub check: String,
    pub target: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    pub timing_ms: f64,
}

impl CheckEntry {
    pub fn new(check: &str, target: impl Into<String>, verdict: Verdict) -> Self {
        CheckEntry {
            check: check.to_string(),
            target: target.into(),
            verdict,
            witnesses: Vec::new(),
            detail: None,
            metrics: BTreeMap::new(),
            timing_ms: 0.0,
        }
    }

    pub fn skipped(check: &str, target: impl Into<String>, why: impl Into<String>) -> Self {
        CheckEntry::new(check, target, Verdict::Skipped).with_detail(why)
    }

    /// An entry from labelled zero-test results; nonzero labels become witnesses.
    pub fn from_zero<'a>(
        check: &str,
        target: impl Into<String>,
        results: impl IntoIterator<Item = (String, &'a Result<ZeroVerdict, ZeroError>)>,
    ) -> Self {
        let mut verdict = Verdict::Proven;
        let mut witnesses = Vec::new();
        for (label, r) in results {
            match r {
                Ok(v) => {
                    verdict = verdict.and(Verdict::from_zero(v));
                    if let ZeroVerdict::NonZero { witness, residual } = v {
                        witnesses.push(format!("{label}: residual {residual:e} at {witness}"));
                    }
                }
                Err(e) => {
                    verdict = verdict.and(Verdict::Inconclusive);
                    witnesses.push(format!("{label}: {e}"));
                }
            }
        }
        CheckEntry {
            witnesses,
            ..CheckEntry::new(check, target, verdict)
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn with_witnesses(mut self, w: Vec<String>) -> Self {
        self.witnesses = w;
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<CheckEntry>,
    pub timing_ms: f64,
}

impl SystemReport {
    pub fn new(name: &str, checks: Vec<CheckEntry>, timing_ms: f64) -> Self {
        SystemReport {
            name: name.to_string(),
            passed: checks.iter().all(CheckEntry::passed),
            checks,
            timing_ms,
        }
    }

    pub fn find(&self, check: &str) -> impl Iterator<Item = &CheckEntry> {
        let check = check.to_string();
        self.checks.iter().filter(move |c| c.check == check)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    pub max_redraws: usize,
    pub degree: u32,
    pub checks: Vec<String>,
}

impl ConfigEcho {
    pub fn new(cfg: &ZeroConfig, checks: Vec<String>) -> Self {
        ConfigEcho {
            trials: cfg.trials,
            tol: cfg.tol,
            seed: cfg.seed,
            max_redraws: cfg.max_redraws,
            degree: cfg.degree,
            checks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub config: ConfigEcho,
    pub passed: bool,
    pub systems: Vec<SystemReport>,
    pub timing_ms: f64,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unsupported report schema `{0}` (expected {SCHEMA})")]
    Schema(String),
    #[error("reports were produced with different configurations")]
    ConfigMismatch,
    #[error("system `{0}` appears in more than one report")]
    Duplicate(String),
    #[error("nothing to merge")]
    Empty,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Report {
    pub fn new(config: ConfigEcho, systems: Vec<SystemReport>, timing_ms: f64) -> Self {
        Report {
            schema: SCHEMA.to_string(),
            passed: systems.iter().all(|s| s.passed),
            config,
            systems,
            timing_ms,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Report, ReportError> {
        let r: Report = serde_json::from_str(text)?;
        if r.schema != SCHEMA {
            return Err(ReportError::Schema(r.schema));
        }
        Ok(r)
    }

    pub fn system(&self, name: &str) -> Option<&SystemReport> {
        self.systems.iter().find(|s| s.name == name)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &CheckEntry)> {
        self.systems
            .iter()
            .flat_map(|s| s.checks.iter().map(move |c| (s.name.as_str(), c)))
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &CheckEntry)> {
        self.entries().filter(|(_, c)| !c.passed())
    }

    /// Concatenate reports made with the same configuration.
    pub fn merge(reports: Vec<Report>) -> Result<Report, ReportError> {
        let mut it = reports.into_iter();
        let first = it.next().ok_or(ReportError::Empty)?;
        let config = first.config.clone();
        let mut systems = first.systems;
        let mut timing = first.timing_ms;
        for r in it {
            if r.schema != SCHEMA {
                return Err(ReportError::Schema(r.schema));
            }
            if r.config != config {
                return Err(ReportError::ConfigMismatch);
            }
            for s in r.systems {
                if systems.iter().any(|t| t.name == s.name) {
                    return Err(ReportError::Duplicate(s.name));
                }
                systems.push(s);
            }
            timing += r.timing_ms;
        }
        Ok(Report::new(config, systems, timing))
    }
}

/// A JSON report with every `timing_ms` field removed, for comparing runs.
pub fn without_timing(json: &str) -> Result<Value, serde_json::Error> {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(map) => {
                map.remove("timing_ms");
                map.values_mut().for_each(strip);
            }
            Value::Array(xs) => xs.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v: Value = serde_json::from_str(json)?;
    strip(&mut v);
    Ok(v)
}
