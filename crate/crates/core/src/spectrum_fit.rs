//! Extraction of notch-resonator parameters from complex transmission:
//! delay removal, circle fit, phase fit, geometric recovery of the
//! environment and a final refinement of the full model on the raw data.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{circle_fit, least_squares_fit, taubin_circle, FitOptions, NumericsError};
use crate::resonator::{s21_full, NotchParams, S21Trace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumFitError {
    #[error("no resonance found: {0}")]
    NoResonance(String),
    #[error("trace too short: {0} points")]
    TooFewPoints(usize),
    #[error("unphysical fit: 1/Q_l = {inv_ql:e} does not exceed cos(phi)/|Q_c| = {coupling:e}")]
    Unphysical { inv_ql: f64, coupling: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    LowSnr,
    DelayUncertain,
    ShallowDip,
    NotConverged,
}

/// One-sigma uncertainties, same units as the corresponding fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamUncertainties {
    pub f_r: f64,
    pub q_loaded: f64,
    pub q_coupling_mag: f64,
    pub phi: f64,
    pub amp: f64,
    pub phase_offset: f64,
    pub delay: f64,
    pub q_internal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: NotchParams,
    pub q_internal: f64,
    pub uncertainties: ParamUncertainties,
    /// Root-mean-square magnitude of the complex residual.
    pub rms_residual: f64,
    pub n_points: usize,
    pub flags: BTreeSet<FitFlag>,
}

/// `Q_i = 1/(1/Q_l − cos(φ)/|Q_c|)`.
pub fn extract_qi(q_loaded: f64, q_coupling_mag: f64, phi: f64) -> Result<f64, SpectrumFitError> {
    let inv_ql = 1.0 / q_loaded;
    let coupling = phi.cos() / q_coupling_mag;
    let denom = inv_ql - coupling;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(SpectrumFitError::Unphysical { inv_ql, coupling });
    }
    Ok(1.0 / denom)
}

/// Cumulative nearest-branch unwrap; a jump of exactly π stays on the
/// previous branch.
pub fn unwrap_phase(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let prev: f64 = out[i - 1];
            let mut v = a + offset;
            while v - prev > PI {
                v -= TAU;
                offset -= TAU;
            }
            while v - prev < -PI {
                v += TAU;
                offset += TAU;
            }
            out.push(v);
        } else {
            out.push(a);
        }
    }
    out
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    /// Cable delay, s.
    pub delay: f64,
    /// Set when the edge windows still carry a significant part of the
    /// resonance, so the edge slope is biased.
    pub uncertain: bool,
}

const EDGE_FRACTION: f64 = 0.2;
const EDGE_DEFICIT_LIMIT: f64 = 0.15;

fn edge_len(n: usize) -> usize {
    ((n as f64 * EDGE_FRACTION).floor() as usize).max(2)
}

fn derotate(trace: &S21Trace, delay: f64) -> Vec<Complex64> {
    trace
        .freqs()
        .iter()
        .zip(trace.values())
        .map(|(&f, &z)| z * Complex64::from_polar(1.0, TAU * f * delay))
        .collect()
}

/// Cable delay from the unwrapped phase slope of the outer 20% of points on
/// each edge, refined by minimizing the circle-fit residual of the
/// delay-corrected points over ±2 rad of winding across the span.
pub fn estimate_delay(trace: &S21Trace) -> Result<DelayEstimate, SpectrumFitError> {
    let n = trace.len();
    if n < 8 {
        return Err(SpectrumFitError::TooFewPoints(n));
    }
    let freqs = trace.freqs();
    let phase = unwrap_phase(&trace.values().iter().map(|z| z.arg()).collect::<Vec<_>>());
    let m = edge_len(n);
    let windows = [0..m, n - m..n];
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for w in &windows {
        let k = w.len() as f64;
        let fm = freqs[w.clone()].iter().sum::<f64>() / k;
        let pm = phase[w.clone()].iter().sum::<f64>() / k;
        for i in w.clone() {
            sxy += (freqs[i] - fm) * (phase[i] - pm);
            sxx += (freqs[i] - fm).powi(2);
        }
    }
    let coarse = -(sxy / sxx) / TAU;
    let span = freqs[n - 1] - freqs[0];
    let unit = 1.0 / (TAU * span);

    let cost = |tau: f64| -> f64 {
        match taubin_circle(&derotate(trace, tau)) {
            Ok(c) => c.rms,
            Err(_) => f64::INFINITY,
        }
    };
    let (lo, hi) = (coarse - 2.0 * unit, coarse + 2.0 * unit);
    let scan = 40;
    let grid: Vec<f64> = (0..=scan).map(|i| lo + (hi - lo) * i as f64 / scan as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&t| cost(t)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(scan / 2);
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(scan)];
    let delay = golden_section(&cost, a, b, 1e-10 * unit);
    let delay = if cost(delay) <= values[best] { delay } else { grid[best] };

    let uncertain = edge_deficit(trace, delay) > EDGE_DEFICIT_LIMIT;
    Ok(DelayEstimate { delay, uncertain })
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Mean squared chord from the off-resonant point, in units of the circle
/// diameter, over the edge windows. Equals the mean of `1/(1 + u²)` for the
/// ideal model, `u` being the detuning in half-linewidths.
fn edge_deficit(trace: &S21Trace, delay: f64) -> f64 {
    let pts = derotate(trace, delay);
    let circle = match taubin_circle(&pts) {
        Ok(c) => c,
        Err(_) => return 1.0,
    };
    let n = pts.len();
    let m = edge_len(n);
    let c = circle.center();
    let left = pts[..m].iter().sum::<Complex64>() / m as f64;
    let right = pts[n - m..].iter().sum::<Complex64>() / m as f64;
    let mid = 0.5 * (left + right) - c;
    if mid.norm() == 0.0 {
        return 1.0;
    }
    let off = c + mid / mid.norm() * circle.radius;
    let diameter2 = (2.0 * circle.radius).powi(2);
    let edge = pts[..m].iter().chain(&pts[n - m..]);
    edge.map(|z| (z - off).norm_sqr() / diameter2).sum::<f64>() / (2 * m) as f64
}

struct Dip {
    index: usize,
    shallow: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Accepts the deepest minimum if it lies 3 dB below the median magnitude,
/// or, failing that, if it is at least 2% deep and ten times the
/// point-to-point noise (flagged shallow).
fn detect_dip(trace: &S21Trace) -> Result<Dip, SpectrumFitError> {
    let mags: Vec<f64> = trace.values().iter().map(|z| z.norm()).collect();
    let (index, &min) = mags
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty trace");
    let med = median(&mut mags.clone());
    if !(med > 0.0) {
        return Err(SpectrumFitError::NoResonance("zero median transmission".into()));
    }
    if 20.0 * (min / med).log10() <= -3.0 {
        return Ok(Dip { index, shallow: false });
    }
    let mut diffs: Vec<f64> = mags.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    // Successive differences of white noise have spread √2·σ; MAD → σ.
    let noise = median(&mut diffs) / (0.674_489_750_196_081_7 * 2f64.sqrt());
    let depth = med - min;
    if depth >= 0.02 * med && depth >= 10.0 * noise {
        return Ok(Dip { index, shallow: true });
    }
    Err(SpectrumFitError::NoResonance(format!(
        "deepest minimum is {:.3} dB below the median",
        -20.0 * (min / med).log10()
    )))
}

/// Frequency at which the decreasing sequence `theta` crosses `target`,
/// searching outward from `start`.
fn crossing(freqs: &[f64], theta: &[f64], target: f64, start: usize) -> Option<f64> {
    let n = freqs.len();
    for r in 0..n {
        for i in [start.checked_sub(r), start.checked_add(r)].into_iter().flatten() {
            if i + 1 >= n {
                continue;
            }
            let (a, b) = (theta[i] - target, theta[i + 1] - target);
            if a == 0.0 {
                return Some(freqs[i]);
            }
            if a * b < 0.0 {
                let t = a / (a - b);
                return Some(freqs[i] + t * (freqs[i + 1] - freqs[i]));
            }
        }
    }
    None
}

struct PhaseFit {
    theta0: f64,
    f_r: f64,
    q_loaded: f64,
}

fn fit_phase(freqs: &[f64], w: &[Complex64], guess_index: usize) -> Result<PhaseFit, SpectrumFitError> {
    let theta = unwrap_phase(&w.iter().map(|z| z.arg()).collect::<Vec<_>>());
    let n = freqs.len();
    let m = edge_len(n);
    let left = w[..m].iter().sum::<Complex64>() / m as f64;
    let right = w[n - m..].iter().sum::<Complex64>() / m as f64;
    let mid = 0.5 * (left + right);
    // Resonance sits opposite the off-resonant point.
    let res_angle = if mid.norm() > 0.0 {
        (-mid).arg()
    } else {
        theta[guess_index]
    };
    let k = ((theta[guess_index] - res_angle) / TAU).round();
    let theta0 = res_angle + TAU * k;
    let f_r = crossing(freqs, &theta, theta0, guess_index).unwrap_or(freqs[guess_index]);
    let span = freqs[n - 1] - freqs[0];
    let q_loaded = match (
        crossing(freqs, &theta, theta0 + 0.5 * PI, guess_index),
        crossing(freqs, &theta, theta0 - 0.5 * PI, guess_index),
    ) {
        (Some(a), Some(b)) if b != a => f_r / (b - a).abs(),
        _ => {
            let lo = guess_index.saturating_sub(3);
            let hi = (guess_index + 3).min(n - 1);
            let slope = (theta[hi] - theta[lo]) / (freqs[hi] - freqs[lo]);
            let q = (slope.abs() * f_r / 4.0).max(f_r / span);
            if q.is_finite() {
                q
            } else {
                10.0 * f_r / span
            }
        }
    };

    let width = f_r / q_loaded;
    let model = |p: &[f64]| -> Vec<f64> {
        let fr = f_r + p[1] * width;
        let ql = p[2].exp();
        freqs
            .iter()
            .zip(&theta)
            .map(|(&f, &t)| t - (p[0] + 2.0 * (2.0 * ql * (1.0 - f / fr)).atan()))
            .collect()
    };
    let fit = least_squares_fit(model, &[theta0, 0.0, q_loaded.ln()], None, &FitOptions::default())?;
    Ok(PhaseFit {
        theta0: fit.params[0],
        f_r: f_r + fit.params[1] * width,
        q_loaded: fit.params[2].exp(),
    })
}

/// Full extraction pipeline; see the module documentation.
pub fn fit_notch(trace: &S21Trace) -> Result<FitReport, SpectrumFitError> {
    let n = trace.len();
    if n < 16 {
        return Err(SpectrumFitError::TooFewPoints(n));
    }
    let dip = detect_dip(trace)?;
    let mut flags = BTreeSet::new();
    if dip.shallow {
        flags.insert(FitFlag::ShallowDip);
    }

    let delay = estimate_delay(trace)?;
    if delay.uncertain {
        flags.insert(FitFlag::DelayUncertain);
    }
    let freqs = trace.freqs();
    let corrected = derotate(trace, delay.delay);
    let circle = circle_fit(&corrected)?;
    let center = circle.center();
    let shifted: Vec<Complex64> = corrected.iter().map(|z| z - center).collect();
    let phase = fit_phase(freqs, &shifted, dip.index)?;

    let off = center - Complex64::from_polar(circle.radius, phase.theta0);
    let amp = off.norm();
    let alpha = off.arg();
    let phi = wrap_angle((off - center).arg() - alpha);
    let q_coupling_mag = phase.q_loaded * amp / (2.0 * circle.radius);
    let start = NotchParams {
        f_r: phase.f_r,
        q_loaded: phase.q_loaded,
        q_coupling_mag,
        phi,
        amp,
        phase_offset: alpha,
        delay: delay.delay,
    };

    let (params, result) = refine(trace, &start)?;
    if !result.converged {
        flags.insert(FitFlag::NotConverged);
    }
    let q_internal = extract_qi(params.q_loaded, params.q_coupling_mag, params.phi)?;
    let uncertainties = propagate(&params, q_internal, &result.covariance, &Scales::new(trace, &start));
    let rms_residual = result.residual_norm / (n as f64).sqrt();
    // Per-quadrature noise against the circle diameter.
    let diameter = params.amp * params.q_loaded / params.q_coupling_mag;
    if diameter < 20.0 * rms_residual / 2f64.sqrt() {
        flags.insert(FitFlag::LowSnr);
    }
    Ok(FitReport {
        params,
        q_internal,
        uncertainties,
        rms_residual,
        n_points: n,
        flags,
    })
}

/// Reference values for the internal coordinates of the refinement.
struct Scales {
    f_ref: f64,
    q_ref: f64,
    span: f64,
}

impl Scales {
    fn new(trace: &S21Trace, start: &NotchParams) -> Self {
        let f = trace.freqs();
        Self {
            f_ref: start.f_r,
            q_ref: start.q_loaded,
            span: f[f.len() - 1] - f[0],
        }
    }

    fn to_internal(&self, p: &NotchParams) -> [f64; 7] {
        [
            (p.f_r / self.f_ref - 1.0) * self.q_ref,
            p.q_loaded.ln(),
            p.q_coupling_mag.ln(),
            p.phi,
            p.amp.ln(),
            p.phase_offset - TAU * self.f_ref * p.delay,
            TAU * self.span * p.delay,
        ]
    }

    fn to_params(&self, u: &[f64]) -> NotchParams {
        let delay = u[6] / (TAU * self.span);
        NotchParams {
            f_r: self.f_ref * (1.0 + u[0] / self.q_ref),
            q_loaded: u[1].exp(),
            q_coupling_mag: u[2].exp(),
            phi: u[3],
            amp: u[4].exp(),
            phase_offset: u[5] + TAU * self.f_ref * delay,
            delay,
        }
    }

    /// Environment phase evaluated around `f_ref` to avoid cancellation.
    fn model(&self, u: &[f64], f: f64) -> Complex64 {
        let p = self.to_params(u);
        let env = Complex64::from_polar(p.amp, u[5] - u[6] * (f - self.f_ref) / self.span);
        let x = f / p.f_r - 1.0;
        let num = Complex64::from_polar(p.q_loaded / p.q_coupling_mag, p.phi);
        env * (Complex64::new(1.0, 0.0) - num / Complex64::new(1.0, 2.0 * p.q_loaded * x))
    }
}

fn refine(
    trace: &S21Trace,
    start: &NotchParams,
) -> Result<(NotchParams, crate::numerics::FitResult), SpectrumFitError> {
    let scales = Scales::new(trace, start);
    let freqs = trace.freqs();
    let data = trace.values();
    let model = |u: &[f64]| -> Vec<f64> {
        let mut r = Vec::with_capacity(2 * freqs.len());
        for (&f, &z) in freqs.iter().zip(data) {
            let d = scales.model(u, f) - z;
            r.push(d.re);
            r.push(d.im);
        }
        r
    };
    let fit = least_squares_fit(model, &scales.to_internal(start), None, &FitOptions::default())?;
    let mut params = scales.to_params(&fit.params);
    params.phase_offset = wrap_angle(params.phase_offset);
    params.phi = wrap_angle(params.phi);
    Ok((params, fit))
}

fn propagate(p: &NotchParams, qi: f64, cov: &nalgebra::DMatrix<f64>, s: &Scales) -> ParamUncertainties {
    let var = |i: usize| cov[(i, i)].max(0.0);
    let k_alpha = s.f_ref / s.span;
    let var_alpha = var(5) + k_alpha * k_alpha * var(6) + 2.0 * k_alpha * cov[(5, 6)];
    let g = [
        qi * qi / p.q_loaded,
        -qi * qi * p.phi.cos() / p.q_coupling_mag,
        -qi * qi * p.phi.sin() / p.q_coupling_mag,
    ];
    let idx = [1usize, 2, 3];
    let mut var_qi = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            var_qi += g[a] * g[b] * cov[(idx[a], idx[b])];
        }
    }
    ParamUncertainties {
        f_r: s.f_ref / s.q_ref * var(0).sqrt(),
        q_loaded: p.q_loaded * var(1).sqrt(),
        q_coupling_mag: p.q_coupling_mag * var(2).sqrt(),
        phi: var(3).sqrt(),
        amp: p.amp * var(4).sqrt(),
        phase_offset: var_alpha.max(0.0).sqrt(),
        delay: var(6).sqrt() / (TAU * s.span),
        q_internal: var_qi.max(0.0).sqrt(),
    }
}

/// Residual of the fitted model on the trace, as complex differences.
pub fn residuals(trace: &S21Trace, p: &NotchParams) -> Vec<Complex64> {
    trace
        .freqs()
        .iter()
        .zip(trace.values())
        .map(|(&f, &z)| z - s21_full(f, p))
        .collect()
}
