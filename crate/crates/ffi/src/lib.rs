//! C ABI for resokit.
//!
//! Every entry point returns a [`ResokitStatus`]. On failure the message is
//! kept per thread and read back with [`resokit_last_error_message`].
//! Traces and fit results cross the boundary as opaque handles that the
//! caller releases with the matching `_free` function.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use resokit::cpw::{self, CpwError};
use resokit::io::{parse_csv_trace, parse_touchstone, to_canonical_json, ParseError};
use resokit::loss::{self, LossError};
use resokit::resonator::{self, NotchParams, ResonatorError, S21Trace, TraceMeta};
use resokit::spectrum_fit::{self, FitReport, SpectrumFitError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResokitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    NoResonance = 4,
    NonConvergence = 5,
    Unphysical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResokitMode {
    QuarterWave = 0,
    HalfWave = 1,
}

/// CPW cross-section and length, SI units. A substrate thickness of zero
/// or less means semi-infinite.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ResokitCpwGeometry {
    pub width: f64,
    pub gap: f64,
    pub film_thickness: f64,
    pub substrate_epsilon_r: f64,
    pub substrate_thickness: f64,
    pub resonator_length: f64,
    pub mode: ResokitMode,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ResokitLineParams {
    pub l_geo: f64,
    pub c_geo: f64,
    pub l_kin: f64,
    pub impedance: f64,
    pub phase_velocity: f64,
    pub alpha_kinetic: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ResokitNotchParams {
    pub f_r: f64,
    pub q_loaded: f64,
    pub q_coupling_mag: f64,
    pub phi: f64,
    pub amp: f64,
    pub phase_offset: f64,
    pub delay: f64,
}

impl From<ResokitNotchParams> for NotchParams {
    fn from(p: ResokitNotchParams) -> Self {
        NotchParams {
            f_r: p.f_r,
            q_loaded: p.q_loaded,
            q_coupling_mag: p.q_coupling_mag,
            phi: p.phi,
            amp: p.amp,
            phase_offset: p.phase_offset,
            delay: p.delay,
        }
    }
}

impl From<NotchParams> for ResokitNotchParams {
    fn from(p: NotchParams) -> Self {
        ResokitNotchParams {
            f_r: p.f_r,
            q_loaded: p.q_loaded,
            q_coupling_mag: p.q_coupling_mag,
            phi: p.phi,
            amp: p.amp,
            phase_offset: p.phase_offset,
            delay: p.delay,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ResokitTlsParams {
    pub q_tls0: f64,
    pub n_c: f64,
    pub beta: f64,
}

/// Opaque S21 trace.
pub struct ResokitTrace(S21Trace);

/// Opaque notch fit result.
pub struct ResokitFit(FitReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(ResokitStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(ResokitStatus::InvalidArgument, msg.into())
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure(ResokitStatus::Parse, e.to_string())
    }
}

impl From<SpectrumFitError> for Failure {
    fn from(e: SpectrumFitError) -> Self {
        let status = match e {
            SpectrumFitError::NoResonance(_) | SpectrumFitError::TooFewPoints(_) => ResokitStatus::NoResonance,
            SpectrumFitError::Unphysical { .. } => ResokitStatus::Unphysical,
            SpectrumFitError::Numerics(_) => ResokitStatus::NonConvergence,
        };
        Failure(status, e.to_string())
    }
}

impl From<CpwError> for Failure {
    fn from(e: CpwError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<ResonatorError> for Failure {
    fn from(e: ResonatorError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<LossError> for Failure {
    fn from(e: LossError) -> Self {
        Failure::invalid(e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ResokitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ResokitStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ResokitStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(ResokitStatus::NullPointer, format!("{name} is null"))
}

unsafe fn slice<'a, T>(data: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

/// Message of the last failed call on this thread, or null after a
/// successful call. The pointer stays valid until the next call into the
/// library on the same thread.
#[no_mangle]
pub extern "C" fn resokit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn resokit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from a resokit function documented as returning an owned
/// string, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn resokit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Line parameters of a CPW from conformal mapping.
///
/// # Safety
/// `geometry` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn resokit_cpw_line_params(
    geometry: *const ResokitCpwGeometry,
    l_kin: f64,
    out: *mut ResokitLineParams,
) -> ResokitStatus {
    guard(|| {
        let g = to_geometry(get(geometry, "geometry")?);
        let p = cpw::line_params_from_geometry(&g, l_kin)?;
        write(
            out,
            ResokitLineParams {
                l_geo: p.l_geo,
                c_geo: p.c_geo,
                l_kin: p.l_kin,
                impedance: p.impedance,
                phase_velocity: p.phase_velocity,
                alpha_kinetic: p.alpha_kinetic,
            },
            "out",
        )
    })
}

/// Frequency of mode `n` (1-based) of the resonator described by `geometry`.
///
/// # Safety
/// `geometry` and `out_hz` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn resokit_cpw_resonance_frequency(
    geometry: *const ResokitCpwGeometry,
    l_kin: f64,
    n: u32,
    out_hz: *mut f64,
) -> ResokitStatus {
    guard(|| {
        let g = to_geometry(get(geometry, "geometry")?);
        let p = cpw::line_params_from_geometry(&g, l_kin)?;
        write(
            out_hz,
            cpw::resonance_frequency(&p, g.resonator_length, n, g.mode)?,
            "out_hz",
        )
    })
}

fn to_geometry(g: &ResokitCpwGeometry) -> cpw::CpwGeometry {
    cpw::CpwGeometry {
        width: g.width,
        gap: g.gap,
        film_thickness: g.film_thickness,
        substrate_epsilon_r: g.substrate_epsilon_r,
        substrate_thickness: if g.substrate_thickness > 0.0 {
            g.substrate_thickness
        } else {
            f64::INFINITY
        },
        resonator_length: g.resonator_length,
        mode: match g.mode {
            ResokitMode::QuarterWave => cpw::Mode::QuarterWave,
            ResokitMode::HalfWave => cpw::Mode::HalfWave,
        },
    }
}

/// Notch-model transmission including the cable environment.
///
/// # Safety
/// `params`, `out_re` and `out_im` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn resokit_s21(
    f: f64,
    params: *const ResokitNotchParams,
    out_re: *mut f64,
    out_im: *mut f64,
) -> ResokitStatus {
    guard(|| {
        let p = NotchParams::from(*get(params, "params")?);
        p.validate()?;
        if !(f > 0.0) {
            return Err(Failure::invalid("frequency must be positive"));
        }
        let s = resonator::s21_full(f, &p);
        write(out_re, s.re, "out_re")?;
        write(out_im, s.im, "out_im")
    })
}

/// `Q_i` from loaded and coupling quality factors and the mismatch angle.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn resokit_extract_qi(
    q_loaded: f64,
    q_coupling_mag: f64,
    phi: f64,
    out: *mut f64,
) -> ResokitStatus {
    guard(|| write(out, spectrum_fit::extract_qi(q_loaded, q_coupling_mag, phi)?, "out"))
}

/// Mean photon number from on-chip power in watts.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn resokit_photon_number(
    p_in_watts: f64,
    f_r: f64,
    q_i: f64,
    q_c: f64,
    q_l: f64,
    out: *mut f64,
) -> ResokitStatus {
    guard(|| write(out, resonator::photon_number(p_in_watts, f_r, q_i, q_c, q_l)?, "out"))
}

/// TLS loss at temperature `temperature_k` and photon number `n_ph`.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn resokit_tls_loss(
    temperature_k: f64,
    n_ph: f64,
    f_r: f64,
    params: *const ResokitTlsParams,
    out: *mut f64,
) -> ResokitStatus {
    guard(|| {
        let p = get(params, "params")?;
        let tls = loss::TlsParams::new(p.q_tls0, p.n_c, p.beta)?;
        if !(temperature_k > 0.0) || !(n_ph >= 0.0) || !(f_r > 0.0) {
            return Err(Failure::invalid(
                "temperature and frequency must be positive, n_ph non-negative",
            ));
        }
        write(out, loss::tls_loss(temperature_k, n_ph, f_r, &tls), "out")
    })
}

/// Vortex entry fields `B_a` and `B_c1` in tesla for a film of the given
/// thickness in metres.
///
/// # Safety
/// `out_b_a` and `out_b_c1` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn resokit_vortex_thresholds(
    thickness: f64,
    out_b_a: *mut f64,
    out_b_c1: *mut f64,
) -> ResokitStatus {
    guard(|| {
        let (b_a, b_c1) = loss::vortex_thresholds(thickness)?;
        write(out_b_a, b_a, "out_b_a")?;
        write(out_b_c1, b_c1, "out_b_c1")
    })
}

/// Builds a trace from parallel arrays of frequency (Hz, strictly
/// increasing) and real and imaginary S21.
///
/// # Safety
/// The three arrays must hold `len` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn resokit_trace_from_arrays(
    freqs: *const f64,
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut ResokitTrace,
) -> ResokitStatus {
    guard(|| {
        let (f, r, i) = (
            slice(freqs, len, "freqs")?,
            slice(re, len, "re")?,
            slice(im, len, "im")?,
        );
        let values = r.iter().zip(i).map(|(&r, &i)| Complex64::new(r, i)).collect();
        let trace = S21Trace::new(f.to_vec(), values, TraceMeta::default())?;
        write(out, Box::into_raw(Box::new(ResokitTrace(trace))), "out")
    })
}

/// Parses Touchstone v1 two-port bytes.
///
/// # Safety
/// `bytes` must hold `len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn resokit_trace_parse_touchstone(
    bytes: *const u8,
    len: usize,
    out: *mut *mut ResokitTrace,
) -> ResokitStatus {
    guard(|| {
        let trace = parse_touchstone(slice(bytes, len, "bytes")?)?;
        write(out, Box::into_raw(Box::new(ResokitTrace(trace))), "out")
    })
}

/// Parses a three-column CSV trace.
///
/// # Safety
/// `bytes` must hold `len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn resokit_trace_parse_csv(
    bytes: *const u8,
    len: usize,
    out: *mut *mut ResokitTrace,
) -> ResokitStatus {
    guard(|| {
        let trace = parse_csv_trace(slice(bytes, len, "bytes")?)?;
        write(out, Box::into_raw(Box::new(ResokitTrace(trace))), "out")
    })
}

/// Number of points of a trace, 0 for null.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn resokit_trace_len(trace: *const ResokitTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// Copies up to `cap` points into the caller's arrays and stores the
/// number copied in `out_written`.
///
/// # Safety
/// Each array must have room for `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn resokit_trace_copy(
    trace: *const ResokitTrace,
    freqs: *mut f64,
    re: *mut f64,
    im: *mut f64,
    cap: usize,
    out_written: *mut usize,
) -> ResokitStatus {
    guard(|| {
        let t = &get(trace, "trace")?.0;
        let n = t.len().min(cap);
        if n > 0 && (freqs.is_null() || re.is_null() || im.is_null()) {
            return Err(null("output array"));
        }
        for (k, (f, v)) in t.freqs().iter().zip(t.values()).take(n).enumerate() {
            freqs.add(k).write(*f);
            re.add(k).write(v.re);
            im.add(k).write(v.im);
        }
        write(out_written, n, "out_written")
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn resokit_trace_free(trace: *mut ResokitTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Fits the notch model to a trace.
///
/// # Safety
/// `trace` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn resokit_fit_notch(trace: *const ResokitTrace, out: *mut *mut ResokitFit) -> ResokitStatus {
    guard(|| {
        let fit = spectrum_fit::fit_notch(&get(trace, "trace")?.0)?;
        write(out, Box::into_raw(Box::new(ResokitFit(fit))), "out")
    })
}

/// Fitted parameters and their one-sigma uncertainties. Either output may
/// be null.
///
/// # Safety
/// `fit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn resokit_fit_params(
    fit: *const ResokitFit,
    params: *mut ResokitNotchParams,
    sigma: *mut ResokitNotchParams,
) -> ResokitStatus {
    guard(|| {
        let r = &get(fit, "fit")?.0;
        if !params.is_null() {
            params.write(r.params.into());
        }
        if !sigma.is_null() {
            let u = r.uncertainties;
            sigma.write(ResokitNotchParams {
                f_r: u.f_r,
                q_loaded: u.q_loaded,
                q_coupling_mag: u.q_coupling_mag,
                phi: u.phi,
                amp: u.amp,
                phase_offset: u.phase_offset,
                delay: u.delay,
            });
        }
        Ok(())
    })
}

/// Internal quality factor and its uncertainty. `sigma` may be null.
///
/// # Safety
/// `fit` and `q_internal` must be valid.
#[no_mangle]
pub unsafe extern "C" fn resokit_fit_q_internal(
    fit: *const ResokitFit,
    q_internal: *mut f64,
    sigma: *mut f64,
) -> ResokitStatus {
    guard(|| {
        let r = &get(fit, "fit")?.0;
        write(q_internal, r.q_internal, "q_internal")?;
        if !sigma.is_null() {
            sigma.write(r.uncertainties.q_internal);
        }
        Ok(())
    })
}

/// Canonical JSON of the fit. Release with [`resokit_string_free`].
///
/// # Safety
/// `fit` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn resokit_fit_to_json(fit: *const ResokitFit, out: *mut *mut c_char) -> ResokitStatus {
    guard(|| {
        let json = to_canonical_json(&get(fit, "fit")?.0);
        let c = CString::new(json).map_err(|e| Failure::invalid(e.to_string()))?;
        write(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn resokit_fit_free(fit: *mut ResokitFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
