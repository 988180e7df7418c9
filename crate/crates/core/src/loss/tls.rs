use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_positive, LossError};
use crate::constants::{BOLTZMANN, PLANCK};
use crate::numerics::{digamma_half_line, least_squares_fit, Bound, FitOptions, FitResult};

/// Two-level-system loss parameters: `δ⁰_TLS = 1/q_tls0`, the critical photon
/// number `n_c` and the saturation exponent `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsParams {
    pub q_tls0: f64,
    pub n_c: f64,
    pub beta: f64,
}

impl TlsParams {
    pub fn new(q_tls0: f64, n_c: f64, beta: f64) -> Result<Self, LossError> {
        check_positive("q_tls0", q_tls0)?;
        check_positive("n_c", n_c)?;
        check_positive("beta", beta)?;
        Ok(Self { q_tls0, n_c, beta })
    }

    /// Standard-tunneling-model range `0 < β ≤ 1`.
    pub fn beta_in_range(&self) -> bool {
        self.beta > 0.0 && self.beta <= 1.0
    }
}

/// Thermal population factor `tanh(h·f/(2·k_B·T))`, in `(0, 1]`.
pub(crate) fn thermal_factor(temperature: f64, f_r: f64) -> f64 {
    (PLANCK * f_r / (2.0 * BOLTZMANN * temperature)).tanh()
}

/// TLS loss `δ_TLS = tanh(h·f/(2·k_B·T)) / (Q⁰·(1 + n/n_c)^β)`.
///
/// `temperature` must be positive; `T = 0` is accepted as the limit.
pub fn tls_loss(temperature: f64, n_ph: f64, f_r: f64, p: &TlsParams) -> f64 {
    thermal_factor(temperature, f_r) / (p.q_tls0 * (1.0 + n_ph / p.n_c).powf(p.beta))
}

/// Above this ratio the bracket is taken from its asymptotic expansion, where
/// the direct difference would lose all significant digits.
const SHIFT_ASYMPTOTIC_Y: f64 = 1e3;

/// Resonance shift caused by TLS,
/// `Δf = f_r/(π·Q⁰)·[Re Ψ(1/2 + i·y) − ln y]` with `y = h·f_r/(2π·k_B·T)`.
///
/// The bracket is dimensionless, so it is scaled by `f_r` to obtain a
/// frequency. It is negative at low temperature, crosses zero near
/// `y ≈ 0.11` and grows logarithmically once `k_B·T ≫ h·f_r`.
pub fn tls_freq_shift(temperature: f64, f_r: f64, q_tls0: f64) -> f64 {
    let y = PLANCK * f_r / (2.0 * PI * BOLTZMANN * temperature);
    let bracket = if y > SHIFT_ASYMPTOTIC_Y {
        let inv2 = 1.0 / (y * y);
        -inv2 / 24.0 - 7.0 * inv2 * inv2 / 960.0
    } else {
        digamma_half_line(y) - y.ln()
    };
    f_r / (PI * q_tls0) * bracket
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsUncertainties {
    pub q_tls0: f64,
    pub n_c: f64,
    pub beta: f64,
    pub delta_const: f64,
}

/// Result of [`fit_tls`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlsFit {
    pub params: TlsParams,
    pub delta_const: f64,
    pub uncertainties: TlsUncertainties,
    /// RMS of `ln Q_model − ln Q_data`.
    pub rms_log_residual: f64,
    pub converged: bool,
    /// `β` ended within 1e-6 of either end of `[0, 1]`.
    pub beta_at_bound: bool,
}

const MIN_POINTS: usize = 6;
const MIN_DECADES: f64 = 2.0;
const BETA_EDGE: f64 = 1e-6;

/// Fits `1/Q_i = δ_TLS(T, n_ph) + δ₀` to a power sweep `(n_ph, Q_i)` taken
/// at a fixed temperature and frequency.
///
/// The residuals are logarithmic, so every point carries the same relative
/// weight. Internally `Q⁰`, `n_c` and `δ₀` are fitted as logarithms and `β`
/// is confined to `[0, 1]`. When the data show no residual loss at all,
/// `δ₀` is reported as zero with zero uncertainty.
pub fn fit_tls(curve: &[(f64, f64)], temperature: f64, f_r: f64) -> Result<TlsFit, LossError> {
    check_positive("temperature", temperature)?;
    check_positive("f_r", f_r)?;
    if curve.len() < MIN_POINTS {
        return Err(LossError::InsufficientData(format!(
            "{} points, at least {MIN_POINTS} required",
            curve.len()
        )));
    }
    for &(n, q) in curve {
        check_positive("n_ph", n)?;
        check_positive("q_i", q)?;
    }
    let n_min = curve.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let n_max = curve.iter().map(|c| c.0).fold(0.0, f64::max);
    if (n_max / n_min).log10() < MIN_DECADES {
        return Err(LossError::InsufficientData(format!(
            "photon numbers span {:.2} decades, at least {MIN_DECADES} required",
            (n_max / n_min).log10()
        )));
    }

    let q_max = curve.iter().map(|c| c.1).fold(0.0, f64::max);
    let q_min = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let delta0 = 1.0 / q_max;
    let mut inv_q0 = 1.0 / q_min - delta0;
    if inv_q0 <= 0.0 {
        inv_q0 = 0.5 / q_min;
    }
    let mut log_n: Vec<f64> = curve.iter().map(|c| c.0.ln()).collect();
    log_n.sort_by(f64::total_cmp);
    let mid = log_n.len() / 2;
    let n_c0 = if log_n.len() % 2 == 1 {
        log_n[mid].exp()
    } else {
        (0.5 * (log_n[mid - 1] + log_n[mid])).exp()
    };

    let tanh = thermal_factor(temperature, f_r);
    let residuals = |q0: f64, n_c: f64, beta: f64, d0: f64| -> Vec<f64> {
        curve
            .iter()
            .map(|&(n, q)| {
                let delta = tanh / (q0 * (1.0 + n / n_c).powf(beta)) + d0;
                -delta.ln() - q.ln()
            })
            .collect()
    };
    let full = |p: &[f64]| residuals(p[0].exp(), p[1].exp(), p[2], p[3].exp());
    let bounds = [
        Bound::unbounded(),
        Bound::unbounded(),
        Bound::new(0.0, 1.0),
        Bound::unbounded(),
    ];
    let options = FitOptions::default();
    // The prescribed start first, then n_c moved by a decade either way; the
    // lowest cost wins. A start can fall into the valley δ₀ → 0 where the
    // Jacobian loses rank.
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for n_c_start in [n_c0, 0.1 * n_c0, 10.0 * n_c0] {
        let initial = [(1.0 / inv_q0).ln(), n_c_start.ln(), 0.3, delta0.ln()];
        match least_squares_fit(full, &initial, Some(&bounds), &options) {
            Ok(fit) if best.as_ref().is_none_or(|b| fit.residual_norm < b.residual_norm) => best = Some(fit),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    let n = curve.len() as f64;
    if let Some(fit) = best {
        let se = fit.std_errors();
        let (q0, n_c, beta, d0) = (
            fit.params[0].exp(),
            fit.params[1].exp(),
            fit.params[2],
            fit.params[3].exp(),
        );
        return Ok(TlsFit {
            params: TlsParams { q_tls0: q0, n_c, beta },
            delta_const: d0,
            uncertainties: TlsUncertainties {
                q_tls0: q0 * se[0],
                n_c: n_c * se[1],
                beta: se[2],
                delta_const: d0 * se[3],
            },
            rms_log_residual: fit.residual_norm / n.sqrt(),
            converged: fit.converged,
            beta_at_bound: !(BETA_EDGE..=1.0 - BETA_EDGE).contains(&beta),
        });
    }

    // Every start collapsed: fit the three TLS parameters with δ₀ = 0.
    let reduced = |p: &[f64]| residuals(p[0].exp(), p[1].exp(), p[2], 0.0);
    let initial = [(1.0 / inv_q0).ln(), n_c0.ln(), 0.3];
    let fit = least_squares_fit(reduced, &initial, Some(&bounds[..3]), &options).map_err(|e| last_err.unwrap_or(e))?;
    let se = fit.std_errors();
    let (q0, n_c, beta) = (fit.params[0].exp(), fit.params[1].exp(), fit.params[2]);
    Ok(TlsFit {
        params: TlsParams { q_tls0: q0, n_c, beta },
        delta_const: 0.0,
        uncertainties: TlsUncertainties {
            q_tls0: q0 * se[0],
            n_c: n_c * se[1],
            beta: se[2],
            delta_const: 0.0,
        },
        rms_log_residual: fit.residual_norm / n.sqrt(),
        converged: fit.converged,
        beta_at_bound: !(BETA_EDGE..=1.0 - BETA_EDGE).contains(&beta),
    })
}
