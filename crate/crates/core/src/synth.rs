//! Synthetic sweep datasets generated from the full loss and shift models,
//! written in the same formats a measurement would produce.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpw::{CpwGeometry, Mode};
use crate::io::{
    write_csv_trace, write_touchstone, CsvLayout, ManifestEntry, SweepKind, SweepManifest, TouchstoneFormat,
};
use crate::loss::{field_freq_shift, loss_budget_at, qp_freq_shift, tls_freq_shift, LossError, QpParams, TlsParams};
use crate::resonator::{chip_input_power, synthesize_trace, AttenuationChain, NotchParams, ResonatorError};
use crate::spectrum_fit::extract_qi;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Resonator(#[from] ResonatorError),
    #[error("photon number did not settle at {vna_power_dbm} dBm")]
    PhotonNumber { vna_power_dbm: f64 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Parameters of a synthetic device and the sweeps run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    /// Bare resonance frequency, before thermal and field shifts.
    pub f_r0: f64,
    pub q_coupling_mag: f64,
    pub phi: f64,
    pub amp: f64,
    pub phase_offset: f64,
    pub delay: f64,
    pub tls: TlsParams,
    pub delta_const: f64,
    pub qp: QpParams,
    pub k_quad: f64,
    pub c2: f64,
    pub chain: AttenuationChain,
    pub geometry: CpwGeometry,
    pub power_sweep_dbm: Vec<f64>,
    pub power_sweep_temperature_k: f64,
    pub temperature_sweep_k: Vec<f64>,
    pub temperature_sweep_power_dbm: f64,
    pub field_sweep_mt: Vec<f64>,
    pub field_sweep_temperature_k: f64,
    pub field_sweep_power_dbm: f64,
    /// Frequency span of each trace in loaded linewidths `f_r/Q_l`.
    pub span_linewidths: f64,
    pub n_points: usize,
    /// Noise per quadrature as a fraction of `amp`.
    pub noise_rel: f64,
}

pub const PRESETS: &[&str] = &["paper-sample2"];

pub fn preset(name: &str) -> Result<Preset, SynthError> {
    match name {
        "paper-sample2" => Ok(sample2_preset()),
        _ => Err(SynthError::UnknownPreset(name.to_string())),
    }
}

fn steps(start: f64, step: f64, count: usize) -> Vec<f64> {
    // Rounded to a fixed grid so labels and manifests print cleanly.
    (0..count)
        .map(|i| ((start + step * i as f64) * 1e6).round() / 1e6)
        .collect()
}

fn sample2_preset() -> Preset {
    Preset {
        name: "paper-sample2".into(),
        f_r0: 5.9643e9,
        q_coupling_mag: 2308.0,
        phi: 0.03,
        amp: 0.3,
        phase_offset: 0.7,
        delay: 50e-9,
        tls: TlsParams {
            q_tls0: 9.5102e4,
            n_c: 13.0,
            beta: 0.35,
        },
        delta_const: 8e-7,
        qp: QpParams::bcs(12.0, 0.0974).expect("valid preset material"),
        k_quad: 0.261,
        c2: 7e-4,
        chain: AttenuationChain::cryostat_input_line(),
        geometry: CpwGeometry {
            width: 4e-6,
            gap: 2e-6,
            film_thickness: 100e-9,
            substrate_epsilon_r: 11.9,
            substrate_thickness: 525e-6,
            resonator_length: 4.688e-3,
            mode: Mode::QuarterWave,
        },
        power_sweep_dbm: steps(-40.0, 2.5, 21),
        power_sweep_temperature_k: 0.026,
        temperature_sweep_k: steps(0.1, 0.1, 30),
        temperature_sweep_power_dbm: -35.0,
        field_sweep_mt: steps(0.0, 16.0, 16),
        field_sweep_temperature_k: 0.1,
        field_sweep_power_dbm: -35.0,
        span_linewidths: 10.0,
        n_points: 1601,
        noise_rel: 2e-4,
    }
}

/// Ground truth for one generated trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTruth {
    pub label: String,
    pub path: String,
    pub sweep: SweepKind,
    pub vna_power_dbm: f64,
    pub temperature_k: f64,
    pub field_mt: f64,
    pub params: NotchParams,
    pub q_internal: f64,
    pub photon_number: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub preset: Preset,
    pub seed: u64,
    pub traces: Vec<TraceTruth>,
}

/// A generated dataset held in memory: file names with their contents.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: SweepManifest,
    pub files: Vec<(String, String)>,
    pub truth: Truth,
}

/// Coupling quality factor entering the photon number, `|Q_c|/cos φ`, so
/// that `1/Q_l = 1/Q_i + 1/Q_c,eff`.
pub fn effective_coupling_q(q_coupling_mag: f64, phi: f64) -> f64 {
    q_coupling_mag / phi.cos()
}

/// Mean photon number for a notch resonator with the given parameters,
/// driven with `p_in` watts at the chip.
pub fn photon_number_for(p: &NotchParams, q_internal: f64, p_in: f64) -> Result<f64, ResonatorError> {
    crate::resonator::photon_number(
        p_in,
        p.f_r,
        q_internal,
        effective_coupling_q(p.q_coupling_mag, p.phi),
        p.q_loaded,
    )
}

struct Operating {
    f_r: f64,
    q_internal: f64,
    q_loaded: f64,
    n_ph: f64,
}

/// Finds the photon number at which the loss model and the drive agree.
fn operating_point(
    preset: &Preset,
    vna_power_dbm: f64,
    temperature: f64,
    field_mt: f64,
) -> Result<Operating, SynthError> {
    let b = field_mt / 1e3;
    let f_r = preset.f_r0
        + tls_freq_shift(temperature, preset.f_r0, preset.tls.q_tls0)
        + qp_freq_shift(temperature, preset.f_r0, &preset.qp)
        + field_freq_shift(b, preset.f_r0, preset.k_quad);
    let p_in = chip_input_power(vna_power_dbm, &preset.chain);
    let q_c_eff = effective_coupling_q(preset.q_coupling_mag, preset.phi);
    let mut n_ph = 1.0;
    for _ in 0..500 {
        let q_i = loss_budget_at(
            temperature,
            n_ph,
            f_r,
            b,
            &preset.tls,
            &preset.qp,
            preset.c2,
            preset.delta_const,
        )?
        .q_internal();
        let q_l = 1.0 / (1.0 / q_i + 1.0 / q_c_eff);
        let next = crate::resonator::photon_number(p_in, f_r, q_i, q_c_eff, q_l)?;
        if (next - n_ph).abs() <= 1e-13 * next {
            return Ok(Operating {
                f_r,
                q_internal: q_i,
                q_loaded: q_l,
                n_ph: next,
            });
        }
        n_ph = next;
    }
    Err(SynthError::PhotonNumber { vna_power_dbm })
}

/// Generates every trace of the preset. Each trace draws its noise from its
/// own seed, taken in order from a stream keyed by `seed`.
pub fn generate(preset: &Preset, seed: u64) -> Result<Dataset, SynthError> {
    let mut plan: Vec<(SweepKind, f64, f64, f64)> = Vec::new();
    for &p in &preset.power_sweep_dbm {
        plan.push((SweepKind::Power, p, preset.power_sweep_temperature_k, 0.0));
    }
    for &t in &preset.temperature_sweep_k {
        plan.push((SweepKind::Temperature, preset.temperature_sweep_power_dbm, t, 0.0));
    }
    for &b in &preset.field_sweep_mt {
        plan.push((
            SweepKind::Field,
            preset.field_sweep_power_dbm,
            preset.field_sweep_temperature_k,
            b,
        ));
    }

    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut counters = [0usize; 3];
    let mut entries = Vec::new();
    let mut files = Vec::new();
    let mut truths = Vec::new();
    for (sweep, power, temperature, field) in plan {
        let trace_seed = seeds.next_u64();
        let op = operating_point(preset, power, temperature, field)?;
        let params = NotchParams {
            f_r: op.f_r,
            q_loaded: op.q_loaded,
            q_coupling_mag: preset.q_coupling_mag,
            phi: preset.phi,
            amp: preset.amp,
            phase_offset: preset.phase_offset,
            delay: preset.delay,
        };
        let half = 0.5 * preset.span_linewidths * op.f_r / op.q_loaded;
        let mut trace = synthesize_trace(
            &params,
            op.f_r - half,
            op.f_r + half,
            preset.n_points,
            preset.noise_rel * preset.amp,
            trace_seed,
        )?;
        let (slot, prefix) = match sweep {
            SweepKind::Power => (0, "power"),
            SweepKind::Temperature => (1, "temperature"),
            SweepKind::Field => (2, "field"),
        };
        let label = format!("{prefix}_{:02}", counters[slot]);
        counters[slot] += 1;
        trace.meta.label = label.clone();
        let (path, body) = match sweep {
            SweepKind::Power => (
                format!("{label}.s2p"),
                write_touchstone(&trace, TouchstoneFormat::RealImag),
            ),
            SweepKind::Temperature => (format!("{label}.csv"), write_csv_trace(&trace, CsvLayout::RealImag)),
            SweepKind::Field => (format!("{label}.csv"), write_csv_trace(&trace, CsvLayout::DbDegrees)),
        };
        entries.push(ManifestEntry {
            path: path.clone(),
            vna_power_dbm: power,
            temperature_k: temperature,
            field_mt: field,
            sweep: Some(sweep),
            label: Some(label.clone()),
        });
        truths.push(TraceTruth {
            label,
            path: path.clone(),
            sweep,
            vna_power_dbm: power,
            temperature_k: temperature,
            field_mt: field,
            q_internal: extract_qi(params.q_loaded, params.q_coupling_mag, params.phi).unwrap_or(op.q_internal),
            params,
            photon_number: op.n_ph,
            seed: trace_seed,
        });
        files.push((path, body));
    }
    let manifest = SweepManifest {
        entries,
        chain: preset.chain.clone(),
        material: Some(preset.qp),
        geometry: Some(preset.geometry),
    };
    Ok(Dataset {
        manifest,
        files,
        truth: Truth {
            preset: preset.clone(),
            seed,
            traces: truths,
        },
    })
}

/// Writes the traces, `manifest.json` and `truth.json` into `dir`,
/// creating it if needed.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<(), SynthError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, body) in &data.files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, data.manifest.to_json()).map_err(io_err(&path))?;
    let path = dir.join("truth.json");
    std::fs::write(&path, crate::io::to_canonical_json(&data.truth)).map_err(io_err(&path))?;
    Ok(())
}
