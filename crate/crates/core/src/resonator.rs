//! Notch-type resonator transmission, trace synthesis and photon-number
//! calibration through the input attenuation chain.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::HBAR;

/// Parameters of a notch resonator in its environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotchParams {
    /// Resonance frequency, Hz.
    pub f_r: f64,
    pub q_loaded: f64,
    pub q_coupling_mag: f64,
    /// Impedance-mismatch angle, rad.
    pub phi: f64,
    /// Off-resonant transmission magnitude.
    pub amp: f64,
    /// Off-resonant phase at zero frequency, rad.
    pub phase_offset: f64,
    /// Cable delay, s.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResonatorError {
    #[error("invalid resonator parameters: {0}")]
    InvalidParams(&'static str),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("unphysical quality factors: {0}")]
    Unphysical(&'static str),
}

impl NotchParams {
    pub fn validate(&self) -> Result<(), ResonatorError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.f_r) {
            return Err(ResonatorError::InvalidParams("f_r must be positive"));
        }
        if !positive(self.q_loaded) || !positive(self.q_coupling_mag) {
            return Err(ResonatorError::InvalidParams("quality factors must be positive"));
        }
        if !positive(self.amp) {
            return Err(ResonatorError::InvalidParams("amplitude must be positive"));
        }
        if ![self.phi, self.phase_offset, self.delay].iter().all(|v| v.is_finite()) {
            return Err(ResonatorError::InvalidParams("angles and delay must be finite"));
        }
        if 1.0 / self.q_loaded < self.phi.cos() / self.q_coupling_mag {
            return Err(ResonatorError::Unphysical(
                "1/Q_l < cos(phi)/|Q_c| implies negative internal loss",
            ));
        }
        Ok(())
    }
}

/// `1 − (Q_l/|Q_c|)·e^{iφ} / (1 + 2i·Q_l·(f/f_r − 1))`.
pub fn s21_ideal(f: f64, p: &NotchParams) -> Complex64 {
    let x = f / p.f_r - 1.0;
    let num = Complex64::from_polar(p.q_loaded / p.q_coupling_mag, p.phi);
    Complex64::new(1.0, 0.0) - num / Complex64::new(1.0, 2.0 * p.q_loaded * x)
}

/// Environment-dressed transmission `a·e^{iα}·e^{−2πifτ}·s21_ideal`.
pub fn s21_full(f: f64, p: &NotchParams) -> Complex64 {
    environment(f, p) * s21_ideal(f, p)
}

pub(crate) fn environment(f: f64, p: &NotchParams) -> Complex64 {
    // Whole cycles of the delay are dropped before the offset is added.
    let cycles = f * p.delay;
    let frac = cycles - cycles.round();
    Complex64::from_polar(p.amp, p.phase_offset - 2.0 * PI * frac)
}

/// Acquisition conditions attached to a trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub vna_power_dbm: f64,
    pub temperature_k: f64,
    pub field_mt: f64,
    pub label: String,
    /// Reference impedance declared by the source file, if any. Not used by
    /// the fits.
    #[serde(default)]
    pub z0_ohm: Option<f64>,
}

/// Complex transmission on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct S21Trace {
    freqs: Vec<f64>,
    values: Vec<Complex64>,
    pub meta: TraceMeta,
}

impl S21Trace {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>, meta: TraceMeta) -> Result<Self, ResonatorError> {
        if freqs.len() != values.len() {
            return Err(ResonatorError::InvalidTrace(format!(
                "{} frequencies but {} samples",
                freqs.len(),
                values.len()
            )));
        }
        if freqs.is_empty() {
            return Err(ResonatorError::InvalidTrace("empty trace".into()));
        }
        if let Some(i) = freqs.iter().position(|f| !f.is_finite()) {
            return Err(ResonatorError::InvalidTrace(format!(
                "non-finite frequency at index {i}"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(ResonatorError::InvalidTrace(format!("non-finite sample at index {i}")));
        }
        if let Some(i) = freqs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(ResonatorError::InvalidTrace(format!(
                "frequencies not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { freqs, values, meta })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

/// Uniform grid evaluation of [`s21_full`] with additive complex Gaussian
/// noise, `noise_sigma` per quadrature. Deterministic in `seed`.
pub fn synthesize_trace(
    p: &NotchParams,
    f_start: f64,
    f_stop: f64,
    n_points: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<S21Trace, ResonatorError> {
    if !(f_start < f_stop) || !f_start.is_finite() || !f_stop.is_finite() {
        return Err(ResonatorError::InvalidTrace("f_start must be below f_stop".into()));
    }
    if n_points < 16 {
        return Err(ResonatorError::InvalidTrace("at least 16 points required".into()));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(ResonatorError::InvalidTrace("noise sigma must be non-negative".into()));
    }
    let step = (f_stop - f_start) / (n_points - 1) as f64;
    let freqs: Vec<f64> = (0..n_points)
        .map(|i| {
            if i + 1 == n_points {
                f_stop
            } else {
                f_start + step * i as f64
            }
        })
        .collect();
    let mut values: Vec<Complex64> = freqs.iter().map(|&f| s21_full(f, p)).collect();
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        for v in values.iter_mut() {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    S21Trace::new(freqs, values, TraceMeta::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationStage {
    pub label: String,
    pub attenuation_db: f64,
}

/// Ordered attenuator stages between the instrument port and the chip.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttenuationChain {
    pub stages: Vec<AttenuationStage>,
}

impl AttenuationChain {
    pub fn new(stages: Vec<AttenuationStage>) -> Result<Self, ResonatorError> {
        if stages
            .iter()
            .any(|s| !(s.attenuation_db >= 0.0) || !s.attenuation_db.is_finite())
        {
            return Err(ResonatorError::InvalidParams("attenuation must be non-negative"));
        }
        Ok(Self { stages })
    }

    /// 40 dB at room temperature, then 20 dB at each of 70 K, 4 K and 0.5 K.
    pub fn cryostat_input_line() -> Self {
        let stage = |label: &str, db: f64| AttenuationStage {
            label: label.to_string(),
            attenuation_db: db,
        };
        Self {
            stages: vec![
                stage("300K", 40.0),
                stage("70K", 20.0),
                stage("4K", 20.0),
                stage("0.5K", 20.0),
            ],
        }
    }

    pub fn total_db(&self) -> f64 {
        self.stages.iter().map(|s| s.attenuation_db).sum()
    }
}

/// Power reaching the chip, watts.
pub fn chip_input_power(vna_power_dbm: f64, chain: &AttenuationChain) -> f64 {
    10f64.powf((vna_power_dbm - chain.total_db() - 30.0) / 10.0)
}

/// Mean intra-resonator photon number
/// `q_i · p_in/(ħω₀²) · 2q_l(q_c − q_l)/q_c²`, `ω₀ = 2πf_r`.
pub fn photon_number(p_in: f64, f_r: f64, q_i: f64, q_c: f64, q_l: f64) -> Result<f64, ResonatorError> {
    if !(p_in >= 0.0) || !(f_r > 0.0) || !(q_i > 0.0) || !(q_c > 0.0) || !(q_l > 0.0) {
        return Err(ResonatorError::InvalidParams("photon number inputs must be positive"));
    }
    if q_l > q_c {
        return Err(ResonatorError::Unphysical("loaded Q exceeds coupling Q"));
    }
    let omega = 2.0 * PI * f_r;
    Ok(q_i * p_in / (HBAR * omega * omega) * (2.0 * q_l * (q_c - q_l) / (q_c * q_c)))
}
