//! Loss and frequency-shift models of a superconducting CPW resonator:
//! two-level-system (TLS) saturation, thermal quasiparticles, in-plane
//! magnetic field, and a constant residual loss, together with the fits that
//! extract their parameters from power, temperature and field sweeps.

mod field;
mod quasiparticle;
mod tls;

pub use field::{
    detect_jumps, diffusion_from_k, field_freq_shift, field_loss, fit_field_c2, fit_field_k, k_from_diffusion,
    vortex_thresholds, FieldC2Fit, FieldKFit, FieldParams, JumpEvent, JUMP_FLOOR_HZ,
};
pub use quasiparticle::{
    fit_shift, qp_freq_shift, qp_loss, total_freq_shift, QpParams, ShiftFit, ShiftFitOptions, DEFAULT_T_C,
};
pub use tls::{fit_tls, tls_freq_shift, tls_loss, TlsFit, TlsParams, TlsUncertainties};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("loss component {name} is negative ({value:e})")]
    NegativeComponent { name: &'static str, value: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Additive decomposition of the internal loss `1/Q_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub delta_tls: f64,
    pub delta_qp: f64,
    pub delta_field: f64,
    pub delta_const: f64,
    pub total: f64,
}

impl LossBudget {
    pub fn q_internal(&self) -> f64 {
        1.0 / self.total
    }
}

/// Assembles a [`LossBudget`]. Every component must be finite and
/// non-negative.
///
/// The components are added in ascending order, so the total does not depend
/// on the order in which they were measured or listed.
pub fn total_loss(delta_tls: f64, delta_qp: f64, delta_field: f64, delta_const: f64) -> Result<LossBudget, LossError> {
    let named = [
        ("delta_tls", delta_tls),
        ("delta_qp", delta_qp),
        ("delta_field", delta_field),
        ("delta_const", delta_const),
    ];
    for (name, value) in named {
        if !value.is_finite() || value < 0.0 {
            return Err(LossError::NegativeComponent { name, value });
        }
    }
    let mut sorted = [delta_tls, delta_qp, delta_field, delta_const];
    sorted.sort_by(f64::total_cmp);
    Ok(LossBudget {
        delta_tls,
        delta_qp,
        delta_field,
        delta_const,
        total: sorted.iter().sum(),
    })
}

/// Evaluates all four loss channels at one operating point.
#[allow(clippy::too_many_arguments)]
pub fn loss_budget_at(
    temperature: f64,
    n_ph: f64,
    f_r: f64,
    b_parallel: f64,
    tls: &TlsParams,
    qp: &QpParams,
    c2: f64,
    delta_const: f64,
) -> Result<LossBudget, LossError> {
    total_loss(
        tls_loss(temperature, n_ph, f_r, tls),
        qp_loss(temperature, f_r, qp),
        field_loss(b_parallel, c2),
        delta_const,
    )
}

fn check_positive(name: &str, value: f64) -> Result<(), LossError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(LossError::InvalidInput(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}
