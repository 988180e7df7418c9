//! Machine-readable analysis report and its canonical JSON encoding.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::manifest::SweepKind;
use crate::cpw::CpwGeometry;
use crate::loss::{FieldC2Fit, FieldKFit, JumpEvent, QpParams, ShiftFit, TlsFit};
use crate::resonator::AttenuationChain;
use crate::spectrum_fit::FitReport;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Subcommands that produced or extended this report, in order.
    pub commands: Vec<String>,
    pub inputs: Vec<InputDigest>,
    /// Taken from `SOURCE_DATE_EPOCH` when set; the wall clock is never
    /// read, so reports stay reproducible.
    pub source_date_epoch: Option<i64>,
}

impl Provenance {
    pub fn new(command: &str, inputs: Vec<InputDigest>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            commands: vec![command.to_string()],
            inputs,
            source_date_epoch: std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|v| v.trim().parse().ok()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceError {
    /// `parse`, `no_resonance`, `unphysical` or `numerics`.
    pub kind: String,
    pub message: String,
}

/// Outcome of fitting one trace, with its acquisition conditions. The
/// conditions are absent for traces fitted outside a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub label: String,
    pub path: String,
    pub sweep: Option<SweepKind>,
    pub vna_power_dbm: Option<f64>,
    pub temperature_k: Option<f64>,
    pub field_mt: Option<f64>,
    pub chip_power_dbm: Option<f64>,
    pub photon_number: Option<f64>,
    pub fit: Option<FitReport>,
    pub error: Option<TraceError>,
}

/// One point of a derived curve, tied to the trace it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
    /// One-sigma uncertainty of `y`.
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    /// Q_i against photon number (power sweep).
    pub qi_vs_nph: Vec<CurvePoint>,
    /// Q_i against temperature in kelvin.
    pub qi_vs_t: Vec<CurvePoint>,
    /// f_r − f_r(coldest point) in Hz against temperature in kelvin.
    pub df_vs_t: Vec<CurvePoint>,
    /// f_r − f_r(lowest field) in Hz against field in tesla.
    pub df_vs_b: Vec<CurvePoint>,
    /// Q_i against field in tesla.
    pub qi_vs_b: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlsModel {
    pub temperature_k: f64,
    pub f_r: f64,
    pub labels: Vec<String>,
    pub fit: TlsFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub labels: Vec<String>,
    pub k_fit: FieldKFit,
    pub c2_fit: Option<FieldC2Fit>,
    pub thickness_m: f64,
    pub t_c: f64,
    pub diffusion_m2_per_s: f64,
    pub b_a_tesla: f64,
    pub b_c1_tesla: f64,
    pub jumps: Vec<JumpEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub tls: Option<TlsModel>,
    pub shift: Option<ShiftFit>,
    pub field: Option<FieldModel>,
}

/// Input line and material description copied from the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub chain: AttenuationChain,
    pub material: Option<QpParams>,
    pub geometry: Option<CpwGeometry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub provenance: Provenance,
    pub setup: Option<Setup>,
    pub traces: Vec<TraceRecord>,
    pub curves: Curves,
    pub models: Models,
}

impl Report {
    pub fn new(provenance: Provenance, traces: Vec<TraceRecord>, curves: Curves) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            provenance,
            setup: None,
            traces,
            curves,
            models: Models::default(),
        }
    }
}

/// Canonical JSON: object keys sorted, two-space indentation, shortest
/// round-trip floats, trailing newline. Identical reports give identical
/// bytes.
pub fn write_report(report: &Report) -> Vec<u8> {
    to_canonical_json(report)
}

/// Canonical JSON encoding of any serializable value, as used for reports.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("value serializes to JSON");
    let mut out = String::new();
    write_canonical(&value, 0, &mut out);
    out.push('\n');
    out.into_bytes()
}

fn write_canonical(value: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize, out: &mut String| out.extend(std::iter::repeat_n(' ', n));
    match value {
        Value::Object(map) if !map.is_empty() => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(indent + 2, out);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_canonical(&map[k.as_str()], indent + 2, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push('}');
        }
        Value::Array(items) if !items.is_empty() => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(indent + 2, out);
                write_canonical(item, indent + 2, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push(']');
        }
        leaf => out.push_str(&leaf.to_string()),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report is not valid JSON for this schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema_version {0:?}, expected \"1\"")]
    Schema(String),
}

pub fn parse_report(bytes: &[u8]) -> Result<Report, ReportError> {
    let report: Report = serde_json::from_slice(bytes)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(ReportError::Schema(report.schema_version));
    }
    Ok(report)
}
