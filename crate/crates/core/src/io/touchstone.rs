//! Touchstone v1 two-port reader and writer. Only S21 is kept.

use std::fmt::Write as _;

use num_complex::Complex64;

use super::{decode_utf8, fmt_float, parse_number, ParseError, ParseErrorKind};
use crate::resonator::{S21Trace, TraceMeta};

/// Number representation of a Touchstone data row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TouchstoneFormat {
    /// Real and imaginary parts.
    RealImag,
    /// Linear magnitude and angle in degrees.
    MagAngle,
    /// `20·log10` magnitude and angle in degrees.
    DbAngle,
}

impl TouchstoneFormat {
    fn token(self) -> &'static str {
        match self {
            Self::RealImag => "RI",
            Self::MagAngle => "MA",
            Self::DbAngle => "DB",
        }
    }

    fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            Self::RealImag => Complex64::new(a, b),
            Self::MagAngle => Complex64::from_polar(a, b.to_radians()),
            Self::DbAngle => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            Self::RealImag => (z.re, z.im),
            Self::MagAngle => (z.norm(), z.arg().to_degrees()),
            Self::DbAngle => (20.0 * z.norm().log10(), z.arg().to_degrees()),
        }
    }
}

struct OptionLine {
    scale: f64,
    format: TouchstoneFormat,
    z0: f64,
}

fn parse_option_line(text: &str, line: usize) -> Result<OptionLine, ParseError> {
    let err = |msg: String| ParseError::new(line, ParseErrorKind::OptionLine, msg);
    let mut opt = OptionLine {
        scale: 1e9,
        format: TouchstoneFormat::MagAngle,
        z0: 50.0,
    };
    let mut tokens = text.split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opt.scale = 1.0,
            "KHZ" => opt.scale = 1e3,
            "MHZ" => opt.scale = 1e6,
            "GHZ" => opt.scale = 1e9,
            "S" => {}
            "Y" | "Z" | "H" | "G" => {
                return Err(err(format!("parameter type {tok} is not supported, only S")));
            }
            "RI" => opt.format = TouchstoneFormat::RealImag,
            "MA" => opt.format = TouchstoneFormat::MagAngle,
            "DB" => opt.format = TouchstoneFormat::DbAngle,
            "R" => {
                let value = tokens
                    .next()
                    .ok_or_else(|| err("R must be followed by the reference impedance".into()))?;
                match value.parse::<f64>() {
                    Ok(z) if z.is_finite() && z > 0.0 => opt.z0 = z,
                    _ => return Err(err(format!("invalid reference impedance {value:?}"))),
                }
            }
            _ => return Err(err(format!("unexpected token {tok:?}"))),
        }
    }
    Ok(opt)
}

/// Parses a Touchstone v1 `.s2p` file and returns its S21 column.
///
/// The option line `# <unit> S <format> R <z0>` must precede the data;
/// omitted fields take the Touchstone defaults (GHz, MA, 50 Ω). Text after
/// `!` is a comment. Each data row holds the frequency followed by the
/// S11, S21, S12, S22 pairs, and frequencies must increase strictly.
pub fn parse_touchstone(bytes: &[u8]) -> Result<S21Trace, ParseError> {
    let text = decode_utf8(bytes)?;
    let mut option: Option<OptionLine> = None;
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    let mut last_line = 1;
    for (idx, raw) in text.split('\n').enumerate() {
        let line = idx + 1;
        let content = raw.split('!').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        last_line = line;
        if let Some(rest) = content.strip_prefix('#') {
            if option.is_some() {
                return Err(ParseError::new(line, ParseErrorKind::OptionLine, "second option line"));
            }
            if !freqs.is_empty() {
                return Err(ParseError::new(
                    line,
                    ParseErrorKind::OptionLine,
                    "option line after data",
                ));
            }
            option = Some(parse_option_line(rest, line)?);
            continue;
        }
        let Some(opt) = option.as_ref() else {
            return Err(ParseError::new(
                line,
                ParseErrorKind::MissingOptionLine,
                "data row before the option line",
            ));
        };
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != 9 {
            return Err(ParseError::new(
                line,
                ParseErrorKind::ColumnCount,
                format!(
                    "expected 9 values (frequency and four S-parameter pairs), found {}",
                    tokens.len()
                ),
            ));
        }
        let f = parse_number(tokens[0], line, "frequency")? * opt.scale;
        let a = parse_number(tokens[3], line, "S21 first value")?;
        let b = parse_number(tokens[4], line, "S21 second value")?;
        for (i, tok) in tokens.iter().enumerate().filter(|(i, _)| ![0, 3, 4].contains(i)) {
            parse_number(tok, line, &format!("column {}", i + 1))?;
        }
        if !(f > 0.0) || !f.is_finite() {
            return Err(ParseError::new(
                line,
                ParseErrorKind::InvalidValue,
                format!("frequency {f} must be positive and finite"),
            ));
        }
        if let Some(&prev) = freqs.last() {
            if f <= prev {
                return Err(ParseError::new(
                    line,
                    ParseErrorKind::NonMonotone,
                    format!("frequency {f} does not exceed the previous {prev}"),
                ));
            }
        }
        let z = opt.format.decode(a, b);
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(ParseError::new(line, ParseErrorKind::InvalidValue, "S21 overflows"));
        }
        freqs.push(f);
        values.push(z);
    }
    let Some(opt) = option else {
        return Err(ParseError::new(
            last_line,
            ParseErrorKind::MissingOptionLine,
            "no option line",
        ));
    };
    if freqs.is_empty() {
        return Err(ParseError::new(last_line, ParseErrorKind::Empty, "no data rows"));
    }
    let meta = TraceMeta {
        z0_ohm: Some(opt.z0),
        ..TraceMeta::default()
    };
    S21Trace::new(freqs, values, meta)
        .map_err(|e| ParseError::new(last_line, ParseErrorKind::InvalidValue, e.to_string()))
}

/// Writes a reciprocal, matched two-port (`S11 = S22 = 0`, `S12 = S21`) in
/// hertz with a 50 Ω reference.
pub fn write_touchstone(trace: &S21Trace, format: TouchstoneFormat) -> String {
    let mut out = String::new();
    if !trace.meta.label.is_empty() {
        let _ = writeln!(out, "! {}", trace.meta.label.replace(['\n', '\r'], " "));
    }
    let z0 = trace.meta.z0_ohm.unwrap_or(50.0);
    let _ = writeln!(out, "# Hz S {} R {}", format.token(), fmt_float(z0));
    let zero = format.encode(Complex64::new(0.0, 0.0));
    let zero = if zero.0.is_finite() { zero } else { (-400.0, 0.0) };
    for (&f, &z) in trace.freqs().iter().zip(trace.values()) {
        let (a, b) = format.encode(z);
        let pair = |x: (f64, f64)| format!("{} {}", fmt_float(x.0), fmt_float(x.1));
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            fmt_float(f),
            pair(zero),
            pair((a, b)),
            pair((a, b)),
            pair(zero)
        );
    }
    out
}
