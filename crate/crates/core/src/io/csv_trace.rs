//! CSV traces with a `freq_hz,re,im` or `freq_hz,mag_db,phase_deg` header.

use std::fmt::Write as _;

use num_complex::Complex64;

use super::{decode_utf8, fmt_float, parse_number, ParseError, ParseErrorKind};
use crate::resonator::{S21Trace, TraceMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvLayout {
    /// `freq_hz,re,im`
    RealImag,
    /// `freq_hz,mag_db,phase_deg`
    DbDegrees,
}

impl CsvLayout {
    fn header(self) -> [&'static str; 3] {
        match self {
            Self::RealImag => ["freq_hz", "re", "im"],
            Self::DbDegrees => ["freq_hz", "mag_db", "phase_deg"],
        }
    }
}

/// Parses a CSV trace. Rows may come in any order; they are sorted by
/// frequency, and a repeated frequency is an error naming the later line.
pub fn parse_csv_trace(bytes: &[u8]) -> Result<S21Trace, ParseError> {
    decode_utf8(bytes)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut layout = None;
    let mut rows: Vec<(f64, Complex64, usize)> = Vec::new();
    let mut last_line = 1;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(last_line, |p| p.line() as usize);
            ParseError::new(line, ParseErrorKind::Encoding, e.to_string())
        })?;
        let line = record.position().map_or(last_line, |p| p.line() as usize);
        last_line = line;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let Some(layout) = layout else {
            let cells: Vec<&str> = record.iter().collect();
            layout = [CsvLayout::RealImag, CsvLayout::DbDegrees]
                .into_iter()
                .find(|l| cells == l.header());
            if layout.is_none() {
                return Err(ParseError::new(
                    line,
                    ParseErrorKind::Header,
                    format!(
                        "expected \"freq_hz,re,im\" or \"freq_hz,mag_db,phase_deg\", found {:?}",
                        cells.join(",")
                    ),
                ));
            }
            continue;
        };
        if record.len() != 3 {
            return Err(ParseError::new(
                line,
                ParseErrorKind::ColumnCount,
                format!("expected 3 cells, found {}", record.len()),
            ));
        }
        let f = parse_number(&record[0], line, "frequency")?;
        let a = parse_number(&record[1], line, layout.header()[1])?;
        let b = parse_number(&record[2], line, layout.header()[2])?;
        if f <= 0.0 {
            return Err(ParseError::new(
                line,
                ParseErrorKind::InvalidValue,
                format!("frequency {f} must be positive"),
            ));
        }
        let z = match layout {
            CsvLayout::RealImag => Complex64::new(a, b),
            CsvLayout::DbDegrees => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        };
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(ParseError::new(line, ParseErrorKind::InvalidValue, "S21 overflows"));
        }
        rows.push((f, z, line));
    }
    if layout.is_none() {
        return Err(ParseError::new(last_line, ParseErrorKind::Header, "missing header"));
    }
    if rows.is_empty() {
        return Err(ParseError::new(last_line, ParseErrorKind::Empty, "no data rows"));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(ParseError::new(
            w[1].2,
            ParseErrorKind::DuplicateFrequency,
            format!("frequency {} already given on line {}", w[1].0, w[0].2),
        ));
    }
    let freqs = rows.iter().map(|r| r.0).collect();
    let values = rows.iter().map(|r| r.1).collect();
    S21Trace::new(freqs, values, TraceMeta::default())
        .map_err(|e| ParseError::new(last_line, ParseErrorKind::InvalidValue, e.to_string()))
}

/// Serializes a trace in the requested layout, shortest round-trip floats.
pub fn write_csv_trace(trace: &S21Trace, layout: CsvLayout) -> String {
    let mut out = layout.header().join(",");
    out.push('\n');
    for (&f, &z) in trace.freqs().iter().zip(trace.values()) {
        let (a, b) = match layout {
            CsvLayout::RealImag => (z.re, z.im),
            CsvLayout::DbDegrees => (20.0 * z.norm().log10(), z.arg().to_degrees()),
        };
        let _ = writeln!(out, "{},{},{}", fmt_float(f), fmt_float(a), fmt_float(b));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_file() {
        let t = parse_csv_trace(b"freq_hz,re,im\n5e9,0.5,-0.5\n5.1e9,1,0\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.values()[0], Complex64::new(0.5, -0.5));
    }

    #[test]
    fn rows_are_sorted_and_crlf_accepted() {
        let t = parse_csv_trace(b"freq_hz,re,im\r\n6e9,1,0\r\n5e9,0,1\r\n").unwrap();
        assert_eq!(t.freqs(), &[5e9, 6e9]);
        assert_eq!(t.values()[0], Complex64::new(0.0, 1.0));
    }

    #[test]
    fn duplicate_frequency_names_line() {
        let err = parse_csv_trace(b"freq_hz,re,im\n5e9,1,0\n6e9,1,0\n5e9,0,1\n").unwrap_err();
        assert_eq!((err.line, err.kind), (4, ParseErrorKind::DuplicateFrequency));
    }

    #[test]
    fn header_and_cell_errors() {
        let err = parse_csv_trace(b"f,re,im\n5e9,1,0\n").unwrap_err();
        assert_eq!((err.line, err.kind), (1, ParseErrorKind::Header));
        let err = parse_csv_trace(b"freq_hz,re,im\n5e9,1,0\n6e9,abc,0\n").unwrap_err();
        assert_eq!((err.line, err.kind), (3, ParseErrorKind::NonNumeric));
        let err = parse_csv_trace(b"freq_hz,re,im\n5e9,1\n").unwrap_err();
        assert_eq!((err.line, err.kind), (2, ParseErrorKind::ColumnCount));
        let err = parse_csv_trace(b"freq_hz,re,im\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Empty);
        let err = parse_csv_trace(b"").unwrap_err();
        assert_eq!((err.line, err.kind), (1, ParseErrorKind::Header));
    }

    #[test]
    fn db_layout_round_trips_through_real_imag() {
        let freqs: Vec<f64> = (0..40).map(|i| 4e9 + 2.5e5 * i as f64).collect();
        let values: Vec<Complex64> = (0..40)
            .map(|i| Complex64::from_polar(0.05 + 0.02 * i as f64, 3.1 - 0.15 * i as f64))
            .collect();
        let trace = S21Trace::new(freqs, values, TraceMeta::default()).unwrap();
        let db = parse_csv_trace(write_csv_trace(&trace, CsvLayout::DbDegrees).as_bytes()).unwrap();
        let ri = parse_csv_trace(write_csv_trace(&db, CsvLayout::RealImag).as_bytes()).unwrap();
        assert_eq!(ri.freqs(), trace.freqs());
        for (a, b) in ri.values().iter().zip(trace.values()) {
            assert!((a - b).norm() < 1e-9);
        }
        let exact = parse_csv_trace(write_csv_trace(&trace, CsvLayout::RealImag).as_bytes()).unwrap();
        assert_eq!(exact.values(), trace.values());
    }
}
