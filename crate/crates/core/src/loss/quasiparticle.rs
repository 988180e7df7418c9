use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::tls::tls_freq_shift;
use super::{check_positive, LossError, TlsParams};
use crate::constants::{BCS_GAP_RATIO, BOLTZMANN, HBAR};
use crate::numerics::{least_squares_fit, Bound, FitOptions};

/// Superconductor parameters entering the quasiparticle terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpParams {
    /// Critical temperature in kelvin.
    pub t_c: f64,
    /// Energy gap Δ in joules.
    pub gap_joules: f64,
    /// Kinetic inductance fraction α.
    pub alpha_kinetic: f64,
}

/// Critical temperature used when none is configured.
pub const DEFAULT_T_C: f64 = 12.0;

impl QpParams {
    pub fn new(t_c: f64, gap_joules: f64, alpha_kinetic: f64) -> Result<Self, LossError> {
        check_positive("t_c", t_c)?;
        check_positive("gap_joules", gap_joules)?;
        if !(0.0..1.0).contains(&alpha_kinetic) {
            return Err(LossError::InvalidInput(format!(
                "alpha_kinetic must lie in [0, 1), got {alpha_kinetic}"
            )));
        }
        Ok(Self {
            t_c,
            gap_joules,
            alpha_kinetic,
        })
    }

    /// Weak-coupling BCS gap `Δ = 1.76·k_B·T_c`.
    pub fn bcs(t_c: f64, alpha_kinetic: f64) -> Result<Self, LossError> {
        Self::new(t_c, BCS_GAP_RATIO * BOLTZMANN * t_c, alpha_kinetic)
    }

    pub fn with_alpha(&self, alpha_kinetic: f64) -> Self {
        Self { alpha_kinetic, ..*self }
    }
}

/// Thermal quasiparticle density `n_qp = 2·D·sqrt(2π·k_B·T·Δ)·exp(−Δ/k_B·T)`
/// for a density of states `dos` at the Fermi level.
fn thermal_qp_density(temperature: f64, gap: f64, dos: f64) -> f64 {
    let kt = BOLTZMANN * temperature;
    2.0 * dos * (2.0 * PI * kt * gap).sqrt() * (-gap / kt).exp()
}

fn qp_loss_with_dos(temperature: f64, f_r: f64, p: &QpParams, dos: f64) -> f64 {
    let omega = 2.0 * PI * f_r;
    let gap = p.gap_joules;
    p.alpha_kinetic / PI * (2.0 * gap / (HBAR * omega)).sqrt() * thermal_qp_density(temperature, gap, dos) / (dos * gap)
}

/// Quasiparticle loss
/// `1/Q_qp = (α/π)·sqrt(2Δ/(ħ·ω))·n_qp(T)/(D(E_F)·Δ)`.
///
/// The density of states cancels between `n_qp` and the denominator and is
/// not an input.
pub fn qp_loss(temperature: f64, f_r: f64, p: &QpParams) -> f64 {
    qp_loss_with_dos(temperature, f_r, p, 1.0)
}

/// Kinetic-inductance frequency shift
/// `Δf_qp = −(1/2)·α·f_r·x/sinh(x)` with `x = Δ/(k_B·T)`. Never positive.
pub fn qp_freq_shift(temperature: f64, f_r: f64, p: &QpParams) -> f64 {
    let x = p.gap_joules / (BOLTZMANN * temperature);
    let ratio = if x > 20.0 {
        // x/sinh x = 2x·e^{−x}/(1 − e^{−2x}) without overflow
        2.0 * x * (-x).exp() / (1.0 - (-2.0 * x).exp())
    } else if x == 0.0 {
        1.0
    } else {
        x / x.sinh()
    };
    -0.5 * p.alpha_kinetic * f_r * ratio
}

/// Total thermal shift `Δf_TLS + Δf_qp`.
pub fn total_freq_shift(temperature: f64, f_r: f64, tls: &TlsParams, qp: &QpParams) -> f64 {
    tls_freq_shift(temperature, f_r, tls.q_tls0) + qp_freq_shift(temperature, f_r, qp)
}

/// Starting point and constraints for [`fit_shift`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftFitOptions {
    pub q_tls0: f64,
    pub alpha_kinetic: f64,
    pub t_c: f64,
    /// `Δ/(k_B·T_c)`, kept fixed while `T_c` varies.
    pub gap_ratio: f64,
    /// Hold `T_c` at its starting value.
    pub fix_t_c: bool,
}

impl Default for ShiftFitOptions {
    fn default() -> Self {
        Self {
            q_tls0: 1e5,
            alpha_kinetic: 0.1,
            t_c: DEFAULT_T_C,
            gap_ratio: BCS_GAP_RATIO,
            fix_t_c: false,
        }
    }
}

/// Result of [`fit_shift`]; uncertainties are one-sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftFit {
    /// Resonance frequency with both shifts removed.
    pub f_r0: f64,
    pub q_tls0: f64,
    pub qp: QpParams,
    pub sigma_f_r0: f64,
    pub sigma_q_tls0: f64,
    pub sigma_alpha_kinetic: f64,
    /// Zero when `T_c` was held fixed.
    pub sigma_t_c: f64,
    pub rms_residual_hz: f64,
    pub converged: bool,
}

/// Fits `f_r(T) = f_r0 + Δf_TLS(T) + Δf_qp(T)` to a temperature sweep of
/// `(T, f_r)` pairs.
pub fn fit_shift(points: &[(f64, f64)], options: &ShiftFitOptions) -> Result<ShiftFit, LossError> {
    let n_free = if options.fix_t_c { 3 } else { 4 };
    if points.len() <= n_free {
        return Err(LossError::InsufficientData(format!(
            "{} points for {n_free} parameters",
            points.len()
        )));
    }
    for &(t, f) in points {
        check_positive("temperature", t)?;
        check_positive("f_r", f)?;
    }
    check_positive("q_tls0", options.q_tls0)?;
    check_positive("t_c", options.t_c)?;
    check_positive("gap_ratio", options.gap_ratio)?;

    // Frequencies are handled in ppm of the coldest point.
    let f_ref = points
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|p| p.1)
        .unwrap_or(1.0);
    let ppm = f_ref * 1e-6;
    let qp_at = |alpha: f64, t_c: f64| QpParams {
        t_c,
        gap_joules: options.gap_ratio * BOLTZMANN * t_c,
        alpha_kinetic: alpha,
    };
    let unpack = |p: &[f64]| {
        let t_c = if options.fix_t_c { options.t_c } else { p[3].exp() };
        (f_ref + p[0] * ppm, p[1].exp(), p[2], t_c)
    };
    let model = |p: &[f64]| -> Vec<f64> {
        let (f0, q0, alpha, t_c) = unpack(p);
        let qp = qp_at(alpha, t_c);
        points
            .iter()
            .map(|&(t, f)| (f0 + tls_freq_shift(t, f0, q0) + qp_freq_shift(t, f0, &qp) - f) / ppm)
            .collect()
    };
    let mut initial = vec![0.0, options.q_tls0.ln(), options.alpha_kinetic.clamp(1e-6, 0.99)];
    let mut bounds = vec![Bound::unbounded(), Bound::unbounded(), Bound::new(0.0, 1.0)];
    if !options.fix_t_c {
        initial.push(options.t_c.ln());
        bounds.push(Bound::unbounded());
    }
    let fit = least_squares_fit(model, &initial, Some(&bounds), &FitOptions::default())?;
    let se = fit.std_errors();
    let (f0, q0, alpha, t_c) = unpack(&fit.params);
    Ok(ShiftFit {
        f_r0: f0,
        q_tls0: q0,
        qp: qp_at(alpha, t_c),
        sigma_f_r0: se[0] * ppm,
        sigma_q_tls0: q0 * se[1],
        sigma_alpha_kinetic: se[2],
        sigma_t_c: if options.fix_t_c { 0.0 } else { t_c * se[3] },
        rms_residual_hz: fit.residual_norm * ppm / (points.len() as f64).sqrt(),
        converged: fit.converged,
    })
}
