//! File formats: Touchstone v1 two-port files, two CSV trace layouts, the
//! JSON sweep manifest and the canonical JSON report.

mod csv_trace;
mod manifest;
mod report;
mod touchstone;

pub use csv_trace::{parse_csv_trace, write_csv_trace, CsvLayout};
pub use manifest::{ManifestEntry, ManifestError, SweepKind, SweepManifest};
pub use report::{
    parse_report, to_canonical_json, write_report, CurvePoint, Curves, FieldModel, InputDigest, Models, Provenance,
    Report, ReportError, Setup, TlsModel, TraceError, TraceRecord, SCHEMA_VERSION,
};
pub use touchstone::{parse_touchstone, write_touchstone, TouchstoneFormat};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resonator::S21Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    Encoding,
    OptionLine,
    MissingOptionLine,
    ColumnCount,
    NonNumeric,
    InvalidValue,
    NonMonotone,
    DuplicateFrequency,
    Header,
    Empty,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Encoding => "invalid encoding",
            Self::OptionLine => "malformed option line",
            Self::MissingOptionLine => "missing option line",
            Self::ColumnCount => "wrong column count",
            Self::NonNumeric => "non-numeric value",
            Self::InvalidValue => "invalid value",
            Self::NonMonotone => "non-monotone frequency",
            Self::DuplicateFrequency => "duplicate frequency",
            Self::Header => "header mismatch",
            Self::Empty => "no data",
        };
        f.write_str(s)
    }
}

/// A located failure while reading a trace file. Lines are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, kind: ParseErrorKind, message: impl Into<String>) -> Self {
        Self {
            line: line.max(1),
            kind,
            message: message.into(),
        }
    }
}

/// Decodes UTF-8, reporting the line of the first invalid byte.
pub(crate) fn decode_utf8(bytes: &[u8]) -> Result<&str, ParseError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let valid = &bytes[..e.valid_up_to()];
        let line = valid.iter().filter(|&&b| b == b'\n').count() + 1;
        ParseError::new(line, ParseErrorKind::Encoding, "input is not valid UTF-8")
    })
}

/// Parses a finite number, or reports it as non-numeric.
pub(crate) fn parse_number(token: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    match token.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::new(
            line,
            ParseErrorKind::NonNumeric,
            format!("{what} {token:?} is not a finite number"),
        )),
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
}

/// Reads a trace, choosing the parser by extension: `.csv` is CSV and
/// everything else is treated as Touchstone.
pub fn load_trace(path: &Path) -> Result<(S21Trace, Vec<u8>), LoadError> {
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io {
        path: display.clone(),
        source,
    })?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let parsed = if is_csv {
        parse_csv_trace(&bytes)
    } else {
        parse_touchstone(&bytes)
    };
    let trace = parsed.map_err(|source| LoadError::Parse { path: display, source })?;
    Ok((trace, bytes))
}

/// Lower-case hexadecimal SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:e}")
}
