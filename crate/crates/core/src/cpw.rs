//! Coplanar-waveguide line parameters from the cross-section by conformal
//! mapping, resonance ladders and kinetic-inductance inversion.
//!
//! All elliptic integrals here take the modulus `k`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{EPSILON_0, MU_0};
use crate::numerics::{elliptic_k, NumericsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    QuarterWave,
    HalfWave,
}

/// Cross-section and length of a CPW resonator, SI units throughout.
/// `substrate_thickness` may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpwGeometry {
    pub width: f64,
    pub gap: f64,
    pub film_thickness: f64,
    pub substrate_epsilon_r: f64,
    pub substrate_thickness: f64,
    pub resonator_length: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// Geometric inductance, H/m.
    pub l_geo: f64,
    /// Geometric capacitance, F/m.
    pub c_geo: f64,
    /// Kinetic inductance, H/m.
    pub l_kin: f64,
    /// Characteristic impedance, Ω.
    pub impedance: f64,
    /// Phase velocity, m/s.
    pub phase_velocity: f64,
    pub alpha_kinetic: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CpwError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(&'static str),
    #[error("mode index must be at least 1")]
    InvalidModeIndex,
    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("kinetic inductance must be non-negative, got {0}")]
    NegativeKineticInductance(f64),
    #[error("measured frequency {measured} Hz exceeds the zero-kinetic-inductance frequency {limit} Hz")]
    FrequencyAboveGeometricLimit { measured: f64, limit: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl CpwGeometry {
    pub fn validate(&self) -> Result<(), CpwError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.width) {
            return Err(CpwError::InvalidGeometry("width must be positive"));
        }
        if !positive(self.gap) {
            return Err(CpwError::InvalidGeometry("gap must be positive"));
        }
        if !positive(self.film_thickness) {
            return Err(CpwError::InvalidGeometry("film thickness must be positive"));
        }
        if !positive(self.resonator_length) {
            return Err(CpwError::InvalidGeometry("resonator length must be positive"));
        }
        if !(self.substrate_thickness > 0.0) {
            return Err(CpwError::InvalidGeometry("substrate thickness must be positive"));
        }
        if !(self.substrate_epsilon_r >= 1.0) || !self.substrate_epsilon_r.is_finite() {
            return Err(CpwError::InvalidGeometry("relative permittivity must be at least 1"));
        }
        Ok(())
    }

    /// Modulus `w/(w + 2s)` of the central conductor mapping.
    pub fn k0(&self) -> f64 {
        self.width / (self.width + 2.0 * self.gap)
    }

    /// Substrate filling factor; 1/2 for an infinitely thick substrate.
    pub fn filling_factor(&self) -> Result<f64, CpwError> {
        let h = self.substrate_thickness;
        if h.is_infinite() {
            return Ok(0.5);
        }
        let k0 = self.k0();
        let k0p = complement(k0);
        let a = PI * self.width / (4.0 * h);
        let b = PI * (self.width + 2.0 * self.gap) / (4.0 * h);
        let k1 = sinh_ratio(a, b);
        let k1p = complement(k1);
        Ok(0.5 * (elliptic_k(k1)? / elliptic_k(k1p)?) * (elliptic_k(k0p)? / elliptic_k(k0)?))
    }

    pub fn effective_permittivity(&self) -> Result<f64, CpwError> {
        Ok(1.0 + self.filling_factor()? * (self.substrate_epsilon_r - 1.0))
    }
}

fn complement(k: f64) -> f64 {
    ((1.0 - k) * (1.0 + k)).sqrt()
}

/// `sinh(a)/sinh(b)` for `0 < a < b` without overflow.
fn sinh_ratio(a: f64, b: f64) -> f64 {
    if b < 20.0 {
        a.sinh() / b.sinh()
    } else {
        (a - b).exp() * (-(-2.0 * a).exp_m1()) / (-(-2.0 * b).exp_m1())
    }
}

impl LineParams {
    /// Completes the derived fields from the three per-length quantities.
    pub fn from_per_length(l_geo: f64, c_geo: f64, l_kin: f64) -> Self {
        let l_total = l_geo + l_kin;
        Self {
            l_geo,
            c_geo,
            l_kin,
            impedance: (l_total / c_geo).sqrt(),
            phase_velocity: 1.0 / (c_geo * l_total).sqrt(),
            alpha_kinetic: l_kin / l_total,
        }
    }
}

/// Per-length parameters of the line described by `geom` with kinetic
/// inductance `l_kin` (H/m). Film thickness does not enter the mapping.
pub fn line_params_from_geometry(geom: &CpwGeometry, l_kin: f64) -> Result<LineParams, CpwError> {
    geom.validate()?;
    if !(l_kin >= 0.0) || !l_kin.is_finite() {
        return Err(CpwError::NegativeKineticInductance(l_kin));
    }
    let k0 = geom.k0();
    let ratio = elliptic_k(complement(k0))? / elliptic_k(k0)?;
    let l_geo = 0.25 * MU_0 * ratio;
    let c_geo = 4.0 * EPSILON_0 * geom.effective_permittivity()? / ratio;
    Ok(LineParams::from_per_length(l_geo, c_geo, l_kin))
}

/// Wavelength multiplier: `f_n = v_ph·ladder(n, mode)/l`.
fn ladder(n: u32, mode: Mode) -> Result<f64, CpwError> {
    if n == 0 {
        return Err(CpwError::InvalidModeIndex);
    }
    Ok(match mode {
        Mode::QuarterWave => (2.0 * n as f64 - 1.0) / 4.0,
        Mode::HalfWave => n as f64 / 2.0,
    })
}

/// Frequency of mode `n` (1 = fundamental); quarter-wave lines only support
/// the odd harmonics, so `n = 2` is three times the fundamental.
pub fn resonance_frequency(params: &LineParams, length: f64, n: u32, mode: Mode) -> Result<f64, CpwError> {
    if !(length > 0.0) {
        return Err(CpwError::InvalidGeometry("resonator length must be positive"));
    }
    Ok(params.phase_velocity * ladder(n, mode)? / length)
}

/// Closed-form kinetic inductance per length that places mode `n` of the
/// geometry at `f_measured`.
pub fn invert_kinetic_inductance(f_measured: f64, geom: &CpwGeometry, n: u32, mode: Mode) -> Result<f64, CpwError> {
    if !(f_measured > 0.0) || !f_measured.is_finite() {
        return Err(CpwError::NonPositiveFrequency(f_measured));
    }
    let bare = line_params_from_geometry(geom, 0.0)?;
    let v_target = f_measured * geom.resonator_length / ladder(n, mode)?;
    let l_kin = 1.0 / (v_target * v_target * bare.c_geo) - bare.l_geo;
    if l_kin < 0.0 {
        // Rounding noise when f_measured is exactly the bare frequency.
        if l_kin > -1e-12 * bare.l_geo {
            return Ok(0.0);
        }
        return Err(CpwError::FrequencyAboveGeometricLimit {
            measured: f_measured,
            limit: resonance_frequency(&bare, geom.resonator_length, n, mode)?,
        });
    }
    Ok(l_kin)
}
