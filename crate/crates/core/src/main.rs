use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use resokit::cpw::{line_params_from_geometry, resonance_frequency, CpwGeometry, LineParams, Mode};
use resokit::io::{to_canonical_json, write_report};
use resokit::pipeline::{self, PipelineError};
use resokit::synth;

/// Superconducting CPW resonator design and characterization.
#[derive(Parser)]
#[command(name = "resokit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Quarter,
    Half,
}

#[derive(Subcommand)]
enum Command {
    /// Line parameters and fundamental frequency of a CPW geometry.
    Design {
        #[arg(long)]
        width_um: f64,
        #[arg(long)]
        gap_um: f64,
        #[arg(long, default_value_t = 100.0)]
        thickness_nm: f64,
        #[arg(long)]
        eps_r: f64,
        /// Substrate thickness; omit for a semi-infinite substrate.
        #[arg(long)]
        sub_um: Option<f64>,
        #[arg(long)]
        length_mm: f64,
        /// Kinetic inductance per unit length, H/m.
        #[arg(long, default_value_t = 0.0)]
        lk_per_m: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Quarter)]
        mode: ModeArg,
    },
    /// Fit a single trace (.s2p Touchstone or .csv).
    Fit {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit every trace of a sweep manifest and assemble the derived curves.
    SweepFit {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the TLS power dependence to the Q_i(n_ph) curve of a report.
    TlsFit {
        report: PathBuf,
        #[arg(long)]
        temperature_k: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the thermal frequency shift of the temperature sweep.
    ShiftFit {
        report: PathBuf,
        /// Hold T_c at the configured material value.
        #[arg(long)]
        fix_tc: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the field response, vortex thresholds and frequency jumps.
    FieldFit {
        report: PathBuf,
        /// Film thickness; defaults to the manifest geometry, else 100 nm.
        #[arg(long)]
        thickness_nm: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic sweep dataset with a manifest and ground truth.
    Synth {
        #[arg(long, default_value = "paper-sample2")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Points per trace.
        #[arg(long)]
        points: Option<usize>,
        /// Noise per quadrature relative to the off-resonant amplitude.
        #[arg(long)]
        noise_rel: Option<f64>,
    },
    /// Emit one derived curve of a report as CSV.
    PlotData {
        report: PathBuf,
        #[arg(long)]
        curve: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct DesignOutput {
    geometry: CpwGeometry,
    effective_permittivity: f64,
    line_params: LineParams,
    f1_hz: f64,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), PipelineError> {
    let io = |path: &str| {
        let path = path.to_string();
        move |source| PipelineError::Io { path, source }
    };
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(io(&path.display().to_string())),
        None => std::io::stdout().lock().write_all(bytes).map_err(io("<stdout>")),
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    let usage = |e: &dyn std::fmt::Display| PipelineError::Usage(e.to_string());
    match command {
        Command::Design {
            width_um,
            gap_um,
            thickness_nm,
            eps_r,
            sub_um,
            length_mm,
            lk_per_m,
            mode,
        } => {
            let geometry = CpwGeometry {
                width: width_um / 1e6,
                gap: gap_um / 1e6,
                film_thickness: thickness_nm / 1e9,
                substrate_epsilon_r: eps_r,
                substrate_thickness: sub_um.map_or(f64::INFINITY, |h| h / 1e6),
                resonator_length: length_mm / 1e3,
                mode: match mode {
                    ModeArg::Quarter => Mode::QuarterWave,
                    ModeArg::Half => Mode::HalfWave,
                },
            };
            let line_params = line_params_from_geometry(&geometry, lk_per_m).map_err(|e| usage(&e))?;
            let output = DesignOutput {
                effective_permittivity: geometry.effective_permittivity().map_err(|e| usage(&e))?,
                f1_hz: resonance_frequency(&line_params, geometry.resonator_length, 1, geometry.mode)
                    .map_err(|e| usage(&e))?,
                geometry: CpwGeometry {
                    // JSON has no infinity; a semi-infinite substrate prints as 0.
                    substrate_thickness: sub_um.map_or(0.0, |h| h / 1e6),
                    ..geometry
                },
                line_params,
            };
            emit(None, &to_canonical_json(&output))
        }
        Command::Fit { trace, out } => emit(out.as_deref(), &write_report(&pipeline::fit_file(&trace)?)),
        Command::SweepFit { manifest, out } => {
            let report = pipeline::sweep_fit(&manifest, pipeline::threads_from_env()?)?;
            emit(out.as_deref(), &write_report(&report))
        }
        Command::TlsFit {
            report,
            temperature_k,
            out,
        } => {
            let mut r = pipeline::load_report(&report)?;
            pipeline::tls_fit_report(&mut r, temperature_k)?;
            emit(out.as_deref(), &write_report(&r))
        }
        Command::ShiftFit { report, fix_tc, out } => {
            let mut r = pipeline::load_report(&report)?;
            pipeline::shift_fit_report(&mut r, fix_tc)?;
            emit(out.as_deref(), &write_report(&r))
        }
        Command::FieldFit {
            report,
            thickness_nm,
            out,
        } => {
            let mut r = pipeline::load_report(&report)?;
            pipeline::field_fit_report(&mut r, thickness_nm.map(|t| t / 1e9))?;
            emit(out.as_deref(), &write_report(&r))
        }
        Command::Synth {
            preset,
            seed,
            out,
            points,
            noise_rel,
        } => {
            let mut p = synth::preset(&preset).map_err(|e| usage(&e))?;
            if let Some(n) = points {
                p.n_points = n;
            }
            if let Some(noise) = noise_rel {
                p.noise_rel = noise;
            }
            let data = synth::generate(&p, seed).map_err(|e| usage(&e))?;
            synth::write_dataset(&out, &data).map_err(|e| match e {
                synth::SynthError::Io { path, source } => PipelineError::Io { path, source },
                other => usage(&other),
            })
        }
        Command::PlotData { report, curve, out } => {
            let r = pipeline::load_report(&report)?;
            emit(out.as_deref(), pipeline::curve_csv(&r, &curve)?.as_bytes())
        }
    }
}

fn error_line(kind: &str, exit_code: i32, message: &str, line: Option<usize>) -> String {
    let mut v = serde_json::json!({
        "error": kind,
        "exit_code": exit_code,
        "message": message,
    });
    if let Some(line) = line {
        v["line"] = line.into();
    }
    v.to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let message = e.kind().to_string();
            eprintln!("{}", error_line("usage", 1, &message, None));
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", error_line(e.kind(), code, &e.to_string(), e.line()));
            ExitCode::from(code as u8)
        }
    }
}
