use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_positive, LossError};
use crate::constants::{BOLTZMANN, ELEMENTARY_CHARGE, FLUX_QUANTUM, HBAR};
use crate::numerics::{least_squares_fit, Bound, FitOptions};

/// Parameters of the parabolic in-plane field response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    /// `Δf/f_r0 = −k_quad·B²`, in T⁻².
    pub k_quad: f64,
    /// Film thickness in meters.
    pub thickness: f64,
    /// Electron diffusion constant in m²/s.
    pub diffusion: f64,
    pub t_c: f64,
}

impl FieldParams {
    /// Completes the parameter set from a measured `k_quad`.
    pub fn from_k(k_quad: f64, thickness: f64, t_c: f64) -> Result<Self, LossError> {
        Ok(Self {
            k_quad,
            thickness,
            diffusion: diffusion_from_k(k_quad, thickness, t_c)?,
            t_c,
        })
    }
}

/// Quadratic field loss `δ_B = c₂·B²`.
///
/// This is a phenomenological model defined by this crate, with `c₂`
/// supplied by the caller or by [`fit_field_c2`].
pub fn field_loss(b_parallel: f64, c2: f64) -> f64 {
    c2 * b_parallel * b_parallel
}

/// Parabolic field shift `Δf = −k·B²·f_r0`.
pub fn field_freq_shift(b_parallel: f64, f_r0: f64, k_quad: f64) -> f64 {
    -k_quad * (b_parallel * b_parallel) * f_r0
}

/// Diffusion constant from the pair-breaking coefficient,
/// `D = 48·k·ħ·k_B·T_c/(π·t²·e²)`.
pub fn diffusion_from_k(k_quad: f64, thickness: f64, t_c: f64) -> Result<f64, LossError> {
    check_positive("k_quad", k_quad)?;
    check_positive("thickness", thickness)?;
    check_positive("t_c", t_c)?;
    Ok(48.0 * k_quad * HBAR * BOLTZMANN * t_c / (PI * thickness * thickness * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE))
}

/// Inverse of [`diffusion_from_k`]: `k = π·t²·e²·D/(48·ħ·k_B·T_c)`.
pub fn k_from_diffusion(diffusion: f64, thickness: f64, t_c: f64) -> Result<f64, LossError> {
    check_positive("diffusion", diffusion)?;
    check_positive("thickness", thickness)?;
    check_positive("t_c", t_c)?;
    Ok(
        PI * thickness * thickness * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE * diffusion
            / (48.0 * HBAR * BOLTZMANN * t_c),
    )
}

/// Thin-film vortex field scales `(B_a, B_c1)` for a film of the given
/// thickness: `B_a = π·ϕ₀/(4·t²)` and `B_c1 = 1.65·ϕ₀/t²`.
pub fn vortex_thresholds(thickness: f64) -> Result<(f64, f64), LossError> {
    check_positive("thickness", thickness)?;
    let t2 = thickness * thickness;
    Ok((PI * FLUX_QUANTUM / (4.0 * t2), 1.65 * FLUX_QUANTUM / t2))
}

/// A discontinuity in a field sweep between samples `index` and `index + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub index: usize,
    /// Midpoint of the two field values, in tesla.
    pub b_field: f64,
    /// `f_{i+1} − f_i` in Hz.
    pub delta_f: f64,
}

/// Successive differences smaller than this are never reported.
pub const JUMP_FLOOR_HZ: f64 = 1e4;
const JUMP_FACTOR: f64 = 5.0;

/// Flags steps whose size exceeds five times the median absolute successive
/// difference, and at least [`JUMP_FLOOR_HZ`].
///
/// `sweep` holds `(B, f_r)` pairs with monotone field values.
pub fn detect_jumps(sweep: &[(f64, f64)]) -> Result<Vec<JumpEvent>, LossError> {
    if sweep.len() < 4 {
        return Err(LossError::InsufficientData(format!(
            "{} points, at least 4 required",
            sweep.len()
        )));
    }
    if sweep.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(LossError::InvalidInput("non-finite sweep value".into()));
    }
    let rising = sweep.windows(2).all(|w| w[1].0 >= w[0].0);
    let falling = sweep.windows(2).all(|w| w[1].0 <= w[0].0);
    if !rising && !falling {
        return Err(LossError::InvalidInput("field values are not monotone".into()));
    }
    let diffs: Vec<f64> = sweep.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let mut sizes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    sizes.sort_by(f64::total_cmp);
    let mid = sizes.len() / 2;
    let median = if sizes.len() % 2 == 1 {
        sizes[mid]
    } else {
        0.5 * (sizes[mid - 1] + sizes[mid])
    };
    let threshold = (JUMP_FACTOR * median).max(JUMP_FLOOR_HZ);
    Ok(diffs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.abs() > threshold)
        .map(|(i, &d)| JumpEvent {
            index: i,
            b_field: 0.5 * (sweep[i].0 + sweep[i + 1].0),
            delta_f: d,
        })
        .collect())
}

/// Result of [`fit_field_k`]; uncertainties are one-sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldKFit {
    pub f_r0: f64,
    pub k_quad: f64,
    pub sigma_f_r0: f64,
    pub sigma_k_quad: f64,
    pub rms_residual_hz: f64,
    pub converged: bool,
}

/// Fits `f_r(B) = f_r0·(1 − k·B²)` to `(B, f_r)` pairs.
pub fn fit_field_k(points: &[(f64, f64)]) -> Result<FieldKFit, LossError> {
    if points.len() < 3 {
        return Err(LossError::InsufficientData(format!(
            "{} points, at least 3 required",
            points.len()
        )));
    }
    for &(b, f) in points {
        if !b.is_finite() {
            return Err(LossError::InvalidInput(format!("non-finite field {b}")));
        }
        check_positive("f_r", f)?;
    }
    let (b_ref, f_ref) = points
        .iter()
        .copied()
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .unwrap_or((0.0, 1.0));
    let ppm = f_ref * 1e-6;
    let f0_guess = f_ref;
    let b_max = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    if b_max == b_ref.abs() {
        return Err(LossError::InsufficientData("all field values are equal".into()));
    }
    // k in units of ppm·T⁻², f_r0 as a ppm offset from the lowest-field point.
    let model = |p: &[f64]| -> Vec<f64> {
        let f0 = f0_guess + p[0] * ppm;
        let k = p[1] * 1e-6;
        points
            .iter()
            .map(|&(b, f)| (f0 * (1.0 - k * b * b) - f) / ppm)
            .collect()
    };
    let fit = least_squares_fit(model, &[0.0, 0.0], None, &FitOptions::default())?;
    let se = fit.std_errors();
    Ok(FieldKFit {
        f_r0: f0_guess + fit.params[0] * ppm,
        k_quad: fit.params[1] * 1e-6,
        sigma_f_r0: se[0] * ppm,
        sigma_k_quad: se[1] * 1e-6,
        rms_residual_hz: fit.residual_norm * ppm / (points.len() as f64).sqrt(),
        converged: fit.converged,
    })
}

/// Result of [`fit_field_c2`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldC2Fit {
    /// Field-independent part of `1/Q_i`.
    pub delta_rest: f64,
    pub c2: f64,
    pub sigma_delta_rest: f64,
    pub sigma_c2: f64,
    pub converged: bool,
}

/// Fits `1/Q_i(B) = δ_rest + c₂·B²` to `(B, Q_i)` pairs with logarithmic
/// residuals.
pub fn fit_field_c2(points: &[(f64, f64)]) -> Result<FieldC2Fit, LossError> {
    if points.len() < 3 {
        return Err(LossError::InsufficientData(format!(
            "{} points, at least 3 required",
            points.len()
        )));
    }
    for &(b, q) in points {
        if !b.is_finite() {
            return Err(LossError::InvalidInput(format!("non-finite field {b}")));
        }
        check_positive("q_i", q)?;
    }
    let q_max = points.iter().map(|p| p.1).fold(0.0, f64::max);
    // δ = δ_rest·(1 + s·B²) keeps both parameters of order one.
    let model = |p: &[f64]| -> Vec<f64> {
        let rest = p[0].exp();
        points
            .iter()
            .map(|&(b, q)| -(rest * (1.0 + p[1] * b * b)).ln() - q.ln())
            .collect()
    };
    let bounds = [Bound::unbounded(), Bound::new(0.0, f64::INFINITY)];
    let fit = least_squares_fit(model, &[(1.0 / q_max).ln(), 1.0], Some(&bounds), &FitOptions::default())?;
    let rest = fit.params[0].exp();
    let s = fit.params[1];
    let cov = &fit.covariance;
    // c₂ = δ_rest·s, propagated through ln δ_rest and s.
    let var_c2 = (s * rest).powi(2) * cov[(0, 0)] + rest * rest * cov[(1, 1)] + 2.0 * s * rest * rest * cov[(0, 1)];
    Ok(FieldC2Fit {
        delta_rest: rest,
        c2: rest * s,
        sigma_delta_rest: rest * cov[(0, 0)].max(0.0).sqrt(),
        sigma_c2: var_c2.max(0.0).sqrt(),
        converged: fit.converged,
    })
}
