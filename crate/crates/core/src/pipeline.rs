//! Batch orchestration: single-trace and manifest fits, derived curves and
//! the model fits that extend a report.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::constants::BOLTZMANN;
use crate::io::{
    load_trace, sha256_hex, CurvePoint, Curves, FieldModel, InputDigest, LoadError, ManifestError, ParseError,
    Provenance, Report, ReportError, Setup, SweepKind, SweepManifest, TlsModel, TraceError, TraceRecord,
};
use crate::loss::{
    detect_jumps, diffusion_from_k, fit_field_c2, fit_field_k, fit_shift, fit_tls, vortex_thresholds, LossError,
    ShiftFitOptions, DEFAULT_T_C,
};
use crate::resonator::chip_input_power;
use crate::spectrum_fit::{fit_notch, FitReport, SpectrumFitError};
use crate::synth::photon_number_for;

/// Default film thickness for vortex thresholds when none is configured.
pub const DEFAULT_THICKNESS_M: f64 = 100e-9;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{path}: {source}")]
    Manifest { path: String, source: ManifestError },
    #[error("{path}: {source}")]
    Report { path: String, source: ReportError },
    #[error("{path}: {source}")]
    Fit { path: String, source: SpectrumFitError },
    #[error("{0}")]
    Model(String),
}

impl From<LoadError> for PipelineError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { path, source } => Self::Io { path, source },
            LoadError::Parse { path, source } => Self::Parse { path, source },
        }
    }
}

impl From<LossError> for PipelineError {
    fn from(e: LossError) -> Self {
        Self::Model(e.to_string())
    }
}

/// Failure class of a notch fit, as recorded in reports.
pub fn fit_error_kind(e: &SpectrumFitError) -> &'static str {
    match e {
        SpectrumFitError::NoResonance(_) | SpectrumFitError::TooFewPoints(_) => "no_resonance",
        SpectrumFitError::Unphysical { .. } => "unphysical",
        SpectrumFitError::Numerics(_) => "non_convergence",
    }
}

impl PipelineError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Io { .. } => "io",
            Self::Parse { .. } | Self::Manifest { .. } | Self::Report { .. } => "parse",
            Self::Fit { source, .. } => fit_error_kind(source),
            Self::Model(_) => "non_convergence",
        }
    }

    /// 1 usage or I/O, 2 no resonance, 3 parse, 4 non-convergence or
    /// unphysical result.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" | "io" => 1,
            "no_resonance" => 2,
            "parse" => 3,
            _ => 4,
        }
    }

    /// Line number for located parse failures.
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Parse { source, .. } => Some(source.line),
            _ => None,
        }
    }
}

/// Reads `RESOKIT_THREADS`; unset or empty means no cap.
pub fn threads_from_env() -> Result<Option<usize>, PipelineError> {
    match std::env::var("RESOKIT_THREADS") {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(PipelineError::Usage(format!(
                "RESOKIT_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Fits one trace file. Fit failures are errors here, unlike in sweeps.
pub fn fit_file(path: &Path) -> Result<Report, PipelineError> {
    let (trace, bytes) = load_trace(path)?;
    let name = display_name(path);
    let fit = fit_notch(&trace).map_err(|source| PipelineError::Fit {
        path: name.clone(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.clone());
    let record = TraceRecord {
        label,
        path: name.clone(),
        sweep: None,
        vna_power_dbm: None,
        temperature_k: None,
        field_mt: None,
        chip_power_dbm: None,
        photon_number: None,
        fit: Some(fit),
        error: None,
    };
    let provenance = Provenance::new(
        "fit",
        vec![InputDigest {
            path: name,
            sha256: sha256_hex(&bytes),
        }],
    );
    Ok(Report::new(provenance, vec![record], Curves::default()))
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    match threads {
        None => Ok(job()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(job))
            .map_err(|e| PipelineError::Usage(format!("cannot start {n} worker threads: {e}"))),
    }
}

/// Fits every trace of a manifest in parallel and assembles the report in
/// manifest order. Unreadable or unparseable files abort the sweep; fit
/// failures are recorded on the trace and the sweep continues.
pub fn sweep_fit(manifest_path: &Path, threads: Option<usize>) -> Result<Report, PipelineError> {
    let manifest_bytes = read_file(manifest_path)?;
    let manifest_name = display_name(manifest_path);
    let manifest = SweepManifest::from_json(&manifest_bytes).map_err(|source| PipelineError::Manifest {
        path: manifest_name.clone(),
        source,
    })?;
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();

    let outcomes: Vec<Result<(TraceRecord, InputDigest), PipelineError>> = with_pool(threads, || {
        manifest
            .entries
            .par_iter()
            .map(|entry| {
                let path: PathBuf = base.join(&entry.path);
                let (trace, bytes) = load_trace(&path)?;
                let chip_power_dbm = entry.vna_power_dbm - manifest.chain.total_db();
                let (fit, error) = match fit_notch(&trace) {
                    Ok(fit) => (Some(fit), None),
                    Err(e) => (
                        None,
                        Some(TraceError {
                            kind: fit_error_kind(&e).to_string(),
                            message: e.to_string(),
                        }),
                    ),
                };
                let photon_number = fit.as_ref().and_then(|f| {
                    photon_number_for(
                        &f.params,
                        f.q_internal,
                        chip_input_power(entry.vna_power_dbm, &manifest.chain),
                    )
                    .ok()
                });
                let record = TraceRecord {
                    label: entry.label(),
                    path: entry.path.clone(),
                    sweep: entry.sweep,
                    vna_power_dbm: Some(entry.vna_power_dbm),
                    temperature_k: Some(entry.temperature_k),
                    field_mt: Some(entry.field_mt),
                    chip_power_dbm: Some(chip_power_dbm),
                    photon_number,
                    fit,
                    error,
                };
                let digest = InputDigest {
                    path: entry.path.clone(),
                    sha256: sha256_hex(&bytes),
                };
                Ok((record, digest))
            })
            .collect()
    })?;

    let mut inputs = vec![InputDigest {
        path: manifest_name,
        sha256: sha256_hex(&manifest_bytes),
    }];
    let mut records = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let (record, digest) = outcome?;
        inputs.push(digest);
        records.push(record);
    }
    let curves = build_curves(&records);
    let mut report = Report::new(Provenance::new("sweep-fit", inputs), records, curves);
    report.setup = Some(Setup {
        chain: manifest.chain.clone(),
        material: manifest.material,
        geometry: manifest.geometry,
    });
    Ok(report)
}

fn fitted<'a>(records: &'a [TraceRecord], kinds: &[Option<SweepKind>]) -> Vec<(&'a TraceRecord, &'a FitReport)> {
    records
        .iter()
        .filter(|r| kinds.contains(&r.sweep))
        .filter_map(|r| r.fit.as_ref().map(|f| (r, f)))
        .collect()
}

fn sorted(mut points: Vec<CurvePoint>) -> Vec<CurvePoint> {
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    points
}

/// Derived curves from fitted traces. Untagged traces only enter the
/// photon-number curve. Frequency offsets are taken from the coldest
/// temperature-sweep trace and the lowest-field field-sweep trace.
pub fn build_curves(records: &[TraceRecord]) -> Curves {
    let point = |r: &TraceRecord, x: f64, y: f64, sigma: f64| CurvePoint {
        label: r.label.clone(),
        x,
        y,
        sigma,
    };
    let qi_vs_nph = records
        .iter()
        .filter(|r| matches!(r.sweep, None | Some(SweepKind::Power)))
        .filter_map(|r| {
            let f = r.fit.as_ref()?;
            Some(point(r, r.photon_number?, f.q_internal, f.uncertainties.q_internal))
        })
        .collect();

    let thermal: Vec<_> = fitted(records, &[Some(SweepKind::Temperature)])
        .into_iter()
        .filter_map(|(r, f)| r.temperature_k.map(|t| (r, f, t)))
        .collect();
    let f_cold = thermal
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(_, f, _)| f.params.f_r);
    let qi_vs_t = thermal
        .iter()
        .map(|(r, f, t)| point(r, *t, f.q_internal, f.uncertainties.q_internal))
        .collect();
    let df_vs_t = thermal
        .iter()
        .map(|(r, f, t)| point(r, *t, f.params.f_r - f_cold.unwrap_or(0.0), f.uncertainties.f_r))
        .collect();

    let field: Vec<_> = fitted(records, &[Some(SweepKind::Field)])
        .into_iter()
        .filter_map(|(r, f)| r.field_mt.map(|b| (r, f, b / 1e3)))
        .collect();
    let f_low = field
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(_, f, _)| f.params.f_r);
    let df_vs_b = field
        .iter()
        .map(|(r, f, b)| point(r, *b, f.params.f_r - f_low.unwrap_or(0.0), f.uncertainties.f_r))
        .collect();
    let qi_vs_b = field
        .iter()
        .map(|(r, f, b)| point(r, *b, f.q_internal, f.uncertainties.q_internal))
        .collect();

    Curves {
        qi_vs_nph: sorted(qi_vs_nph),
        qi_vs_t: sorted(qi_vs_t),
        df_vs_t: sorted(df_vs_t),
        df_vs_b: sorted(df_vs_b),
        qi_vs_b: sorted(qi_vs_b),
    }
}

pub fn load_report(path: &Path) -> Result<Report, PipelineError> {
    let bytes = read_file(path)?;
    crate::io::parse_report(&bytes).map_err(|source| PipelineError::Report {
        path: display_name(path),
        source,
    })
}

/// Fits the TLS model to the power-sweep traces taken within 1% of
/// `temperature_k` and stores the result in the report.
pub fn tls_fit_report(report: &mut Report, temperature_k: f64) -> Result<(), PipelineError> {
    if !(temperature_k > 0.0) || !temperature_k.is_finite() {
        return Err(PipelineError::Usage("temperature must be positive".into()));
    }
    let selected: Vec<(&TraceRecord, &FitReport, f64)> = fitted(&report.traces, &[None, Some(SweepKind::Power)])
        .into_iter()
        .filter(|(r, _)| {
            r.temperature_k
                .is_some_and(|t| (t - temperature_k).abs() <= 0.01 * temperature_k)
        })
        .filter_map(|(r, f)| r.photon_number.map(|n| (r, f, n)))
        .collect();
    if selected.is_empty() {
        return Err(PipelineError::Model(format!(
            "no fitted power-sweep traces with a photon number at {temperature_k} K"
        )));
    }
    let curve: Vec<(f64, f64)> = selected.iter().map(|(_, f, n)| (*n, f.q_internal)).collect();
    let f_r = selected.iter().map(|(_, f, _)| f.params.f_r).sum::<f64>() / selected.len() as f64;
    let fit = fit_tls(&curve, temperature_k, f_r)?;
    report.models.tls = Some(TlsModel {
        temperature_k,
        f_r,
        labels: selected.iter().map(|(r, _, _)| r.label.clone()).collect(),
        fit,
    });
    report.provenance.commands.push("tls-fit".into());
    Ok(())
}

/// Fits the thermal frequency shift to the temperature-sweep traces. The
/// starting point uses the report's material and TLS model when present.
pub fn shift_fit_report(report: &mut Report, fix_t_c: bool) -> Result<(), PipelineError> {
    let points: Vec<(f64, f64)> = fitted(&report.traces, &[Some(SweepKind::Temperature)])
        .into_iter()
        .filter_map(|(r, f)| r.temperature_k.map(|t| (t, f.params.f_r)))
        .collect();
    let mut options = ShiftFitOptions {
        fix_t_c,
        ..ShiftFitOptions::default()
    };
    if let Some(m) = report.setup.as_ref().and_then(|s| s.material) {
        options.t_c = m.t_c;
        options.alpha_kinetic = m.alpha_kinetic;
        options.gap_ratio = m.gap_joules / (BOLTZMANN * m.t_c);
    }
    if let Some(tls) = &report.models.tls {
        options.q_tls0 = tls.fit.params.q_tls0;
    }
    report.models.shift = Some(fit_shift(&points, &options)?);
    report.provenance.commands.push("shift-fit".into());
    Ok(())
}

/// Fits `k_quad` (and, when the data allow, the quadratic field loss) to the
/// field-sweep traces, derives the diffusion constant and vortex thresholds
/// and lists frequency jumps.
pub fn field_fit_report(report: &mut Report, thickness_m: Option<f64>) -> Result<(), PipelineError> {
    let mut sweep: Vec<(&TraceRecord, &FitReport, f64)> = fitted(&report.traces, &[Some(SweepKind::Field)])
        .into_iter()
        .filter_map(|(r, f)| r.field_mt.map(|b| (r, f, b / 1e3)))
        .collect();
    sweep.sort_by(|a, b| a.2.total_cmp(&b.2));
    let shift: Vec<(f64, f64)> = sweep.iter().map(|(_, f, b)| (*b, f.params.f_r)).collect();
    let loss: Vec<(f64, f64)> = sweep.iter().map(|(_, f, b)| (*b, f.q_internal)).collect();
    let k_fit = fit_field_k(&shift)?;
    let c2_fit = fit_field_c2(&loss).ok();
    let setup = report.setup.as_ref();
    let thickness = thickness_m
        .or_else(|| setup.and_then(|s| s.geometry).map(|g| g.film_thickness))
        .unwrap_or(DEFAULT_THICKNESS_M);
    let t_c = setup.and_then(|s| s.material).map_or(DEFAULT_T_C, |m| m.t_c);
    let (b_a, b_c1) = vortex_thresholds(thickness)?;
    let jumps = if shift.len() >= 4 {
        detect_jumps(&shift)?
    } else {
        Vec::new()
    };
    report.models.field = Some(FieldModel {
        labels: sweep.iter().map(|(r, _, _)| r.label.clone()).collect(),
        diffusion_m2_per_s: diffusion_from_k(k_fit.k_quad.abs().max(f64::MIN_POSITIVE), thickness, t_c)?,
        k_fit,
        c2_fit,
        thickness_m: thickness,
        t_c,
        b_a_tesla: b_a,
        b_c1_tesla: b_c1,
        jumps,
    });
    report.provenance.commands.push("field-fit".into());
    Ok(())
}

/// Curves available to [`curve_csv`], by command-line name.
pub const CURVE_NAMES: &[&str] = &["qi-vs-nph", "qi-vs-t", "df-vs-t", "df-vs-b", "qi-vs-b"];

/// One curve as CSV with a `label,x,y,sigma` header.
pub fn curve_csv(report: &Report, name: &str) -> Result<String, PipelineError> {
    let c = &report.curves;
    let points = match name {
        "qi-vs-nph" => &c.qi_vs_nph,
        "qi-vs-t" => &c.qi_vs_t,
        "df-vs-t" => &c.df_vs_t,
        "df-vs-b" => &c.df_vs_b,
        "qi-vs-b" => &c.qi_vs_b,
        _ => {
            return Err(PipelineError::Usage(format!(
                "unknown curve {name:?}, expected one of {}",
                CURVE_NAMES.join(", ")
            )))
        }
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| PipelineError::Usage(e.to_string());
    writer.write_record(["label", "x", "y", "sigma"]).map_err(io)?;
    for p in points {
        writer
            .write_record([
                p.label.clone(),
                format!("{:e}", p.x),
                format!("{:e}", p.y),
                format!("{:e}", p.sigma),
            ])
            .map_err(io)?;
    }
    let bytes = writer.into_inner().map_err(|e| PipelineError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}
