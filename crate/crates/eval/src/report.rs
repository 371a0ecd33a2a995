//! The versioned results document.
//!
//! Top-level keys are always present: `schema_version`, `meta`, `clean`,
//! `robustness`, `alpha_sweep`, `splice` and `fpr`. A section that was not
//! run is `null`. Every rate carries its count, sample size and Wilson 95%
//! interval. The JSON Schema lives in `schema/results-v1.schema.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{wilson_interval, StatsError};

pub const SCHEMA_VERSION: u32 = 1;

/// The JSON Schema describing [`Report`].
pub const SCHEMA: &str = include_str!("../schema/results-v1.schema.json");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("results JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("written report does not read back identically")]
    RoundTrip,
}

/// `k` of `n` with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub k: u64,
    pub n: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Rate {
    pub fn new(k: u64, n: u64) -> Result<Self, StatsError> {
        let (ci_low, ci_high) = wilson_interval(k, n)?;
        Ok(Self { k, n, rate: k as f64 / n as f64, ci_low, ci_high })
    }

    pub fn from_flags(flags: impl IntoIterator<Item = bool>) -> Result<Self, StatsError> {
        let (k, n) = flags.into_iter().fold((0, 0), |(k, n), f| (k + f as u64, n + 1));
        Self::new(k, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub toolkit_version: String,
    pub seed: u64,
    pub params_hash: String,
    pub alpha: f64,
    pub corpus: String,
    pub files: usize,
    pub chunks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitErrors {
    pub errors: u64,
    pub bits: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Auc {
    pub value: f64,
    pub n_pos: usize,
    /// Distinct positive windows behind `n_pos` draws.
    pub n_pos_distinct: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanSection {
    pub chunks: usize,
    pub decode: Rate,
    /// Decoded payloads equal to the embedded fields.
    pub msg_match: Rate,
    /// Post-ECC bit errors over decoded chunks.
    pub ber: BitErrors,
    pub wm_only: Rate,
    pub msv1: Rate,
    pub embed_converged: Rate,
    pub mean_iterations: f64,
    pub mean_snr_db: f64,
    pub auc: Option<Auc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: String,
    pub transform: String,
    pub decode: Rate,
    pub wm_only: Rate,
    pub msv1: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub snr_db: f64,
    pub condition: String,
    pub wm_only: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpliceResult {
    pub scenario: String,
    /// `iou` or `macro_f1`.
    pub metric: String,
    pub chunks: usize,
    pub wm_only: f64,
    pub msv1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOperatingPoint {
    pub target: f64,
    pub threshold: f64,
    pub val_false_positives: u64,
    pub val_fpr: f64,
    pub test_false_positives: u64,
    pub test_fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedFpr {
    pub tier: String,
    pub count: u64,
    pub n: u64,
    pub rate: f64,
    /// Clopper–Pearson 95% upper bound when `count` is zero.
    pub upper_bound: Option<f64>,
    /// Binomial bootstrap 95% interval when `count` is positive.
    pub bootstrap_ci: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprSection {
    pub windows: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub score: Vec<ScoreOperatingPoint>,
    pub verified: Vec<VerifiedFpr>,
    /// Windows from one file are correlated, so intervals are approximate.
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub meta: Meta,
    pub clean: Option<CleanSection>,
    pub robustness: Option<Vec<ConditionResult>>,
    pub alpha_sweep: Option<Vec<SweepPoint>>,
    pub splice: Option<Vec<SpliceResult>>,
    pub fpr: Option<FprSection>,
}

impl Report {
    pub fn new(meta: Meta) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            meta,
            clean: None,
            robustness: None,
            alpha_sweep: None,
            splice: None,
            fpr: None,
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>, ReportError> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ReportError> {
        let value: serde_json::Value = serde_json::from_slice(bytes)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != SCHEMA_VERSION {
            return Err(ReportError::Version(version));
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Write `report` to `path` and check that it reads back unchanged.
pub fn emit_report(report: &Report, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    let io = |source| ReportError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, report.to_json()?).map_err(io)?;
    if read_report(path)? != *report {
        return Err(ReportError::RoundTrip);
    }
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report, ReportError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    Report::from_json(&bytes)
}

/// Check `doc` against [`SCHEMA`]. Supports the keywords the schema uses:
/// `type`, `required`, `properties`, `items`, `$ref`, `const` and `enum`.
pub fn validate_json(doc: &serde_json::Value) -> Result<(), String> {
    let schema: serde_json::Value = serde_json::from_str(SCHEMA).map_err(|e| e.to_string())?;
    check_node(&schema, &schema, doc, "$")
}

fn type_matches(name: &str, v: &serde_json::Value) -> bool {
    match name {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

fn check_node(root: &serde_json::Value, node: &serde_json::Value, v: &serde_json::Value, at: &str) -> Result<(), String> {
    if let Some(r) = node.get("$ref").and_then(|r| r.as_str()) {
        let target = r
            .strip_prefix("#/")
            .ok_or_else(|| format!("unsupported $ref {r}"))?
            .split('/')
            .try_fold(root, |n, k| n.get(k))
            .ok_or_else(|| format!("dangling $ref {r}"))?;
        return check_node(root, target, v, at);
    }
    if let Some(t) = node.get("type") {
        let ok = match t {
            serde_json::Value::String(name) => type_matches(name, v),
            serde_json::Value::Array(names) => names.iter().filter_map(|n| n.as_str()).any(|n| type_matches(n, v)),
            _ => false,
        };
        if !ok {
            return Err(format!("{at}: expected type {t}, found {v}"));
        }
    }
    if let Some(c) = node.get("const") {
        if c != v {
            return Err(format!("{at}: expected {c}"));
        }
    }
    if let Some(options) = node.get("enum").and_then(|e| e.as_array()) {
        if !options.contains(v) {
            return Err(format!("{at}: {v} is not one of {options:?}"));
        }
    }
    if let Some(obj) = v.as_object() {
        for key in node.get("required").and_then(|r| r.as_array()).into_iter().flatten() {
            let key = key.as_str().unwrap_or_default();
            if !obj.contains_key(key) {
                return Err(format!("{at}: missing `{key}`"));
            }
        }
        if let Some(props) = node.get("properties").and_then(|p| p.as_object()) {
            for (key, sub) in props {
                if let Some(child) = obj.get(key) {
                    check_node(root, sub, child, &format!("{at}.{key}"))?;
                }
            }
        }
    }
    if let (Some(items), Some(arr)) = (node.get("items"), v.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            check_node(root, items, child, &format!("{at}[{i}]"))?;
        }
    }
    Ok(())
}
