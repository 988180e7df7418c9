#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use resokit::loss::{field_freq_shift, fit_tls, tls_loss, TlsParams};
use resokit::numerics::central_jacobian;
use resokit::resonator::{s21_full, synthesize_trace, NotchParams, S21Trace};
use resokit::spectrum_fit::{extract_qi, fit_notch};

/// Relative error with an absolute floor for parameters that may be zero.
pub fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

/// Parameter grid spanning Q_l ∈ [1e3, 1e6], Q_l/|Q_c| ∈ [0.1, 0.95],
/// φ ∈ [−0.5, 0.5], τ ∈ [0, 100 ns], span ∈ [5, 50] linewidths.
pub fn notch_grid(count: usize, seed: u64) -> Vec<(NotchParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let q_loaded = 10f64.powf(rng.random_range(3.0..6.0));
            let ratio = rng.random_range(0.1..0.95);
            let p = NotchParams {
                f_r: rng.random_range(4e9..8e9),
                q_loaded,
                q_coupling_mag: q_loaded / ratio,
                phi: rng.random_range(-0.5..0.5),
                amp: rng.random_range(0.05..1.0),
                phase_offset: rng.random_range(-3.0..3.0),
                delay: if i % 10 == 0 {
                    0.0
                } else {
                    rng.random_range(0.0..100e-9)
                },
            };
            (p, rng.random_range(5.0..50.0))
        })
        .collect()
}

pub fn centered_trace(p: &NotchParams, linewidths: f64, n: usize, sigma: f64, seed: u64) -> S21Trace {
    let half = 0.5 * linewidths * p.f_r / p.q_loaded;
    synthesize_trace(p, p.f_r - half, p.f_r + half, n, sigma, seed).expect("valid synthesis")
}

/// Sample-2-like resonator: f_r = 5.9643 GHz, |Q_c| = 2308, Q_l = 2253.6.
pub fn sample2_notch() -> NotchParams {
    NotchParams {
        f_r: 5.9643e9,
        q_loaded: 2253.6,
        q_coupling_mag: 2308.0,
        phi: 0.03,
        amp: 0.3,
        phase_offset: 0.7,
        delay: 50e-9,
    }
}

pub struct GridOutcome {
    pub cases: usize,
    /// Largest relative error over all seven parameters and Q_i.
    pub worst: f64,
    pub failures: Vec<String>,
}

/// Noiseless round trip over [`notch_grid`] with 1601-point traces.
pub fn notch_grid_round_trip(count: usize, seed: u64, tolerance: f64) -> GridOutcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (k, (p, span)) in notch_grid(count, seed).into_iter().enumerate() {
        let trace = centered_trace(&p, span, 1601, 0.0, 0);
        match fit_notch(&trace) {
            Ok(r) => {
                let q = r.params;
                let qi = extract_qi(p.q_loaded, p.q_coupling_mag, p.phi).expect("physical grid point");
                let errors = [
                    rel_err(q.f_r, p.f_r, 0.0),
                    rel_err(q.q_loaded, p.q_loaded, 0.0),
                    rel_err(q.q_coupling_mag, p.q_coupling_mag, 0.0),
                    rel_err(q.phi, p.phi, 1e-2),
                    rel_err(q.amp, p.amp, 0.0),
                    rel_err(q.phase_offset, p.phase_offset, 1e-2),
                    rel_err(q.delay, p.delay, 1e-9),
                    rel_err(r.q_internal, qi, 0.0),
                ];
                let m = errors.iter().copied().fold(0.0, f64::max);
                worst = worst.max(m);
                if m > tolerance {
                    failures.push(format!("case {k}: max error {m:e} for {p:?}"));
                }
            }
            Err(e) => failures.push(format!("case {k}: {e} for {p:?}")),
        }
    }
    GridOutcome {
        cases: count,
        worst,
        failures,
    }
}

pub struct MonteCarloOutcome {
    pub runs: usize,
    pub errors: usize,
    pub f_r_within_1ppm: usize,
    pub q_loaded_within_1pct: usize,
    pub q_coupling_within_1pct: usize,
    pub phi_within_20mrad: usize,
    /// One-sigma coverage counts for f_r, Q_l, |Q_c|, φ, a, α, τ, Q_i.
    pub coverage: [usize; 8],
}

/// Repeated fits of [`sample2_notch`] at 40 dB SNR (σ = a/100 per
/// quadrature), 10 linewidths, `n_points` points.
pub fn notch_monte_carlo(runs: usize, n_points: usize, seed_base: u64) -> (MonteCarloOutcome, Vec<NotchParams>) {
    let p = sample2_notch();
    let qi_true = extract_qi(p.q_loaded, p.q_coupling_mag, p.phi).unwrap();
    let mut out = MonteCarloOutcome {
        runs,
        errors: 0,
        f_r_within_1ppm: 0,
        q_loaded_within_1pct: 0,
        q_coupling_within_1pct: 0,
        phi_within_20mrad: 0,
        coverage: [0; 8],
    };
    let mut fitted = Vec::with_capacity(runs);
    for seed in 0..runs as u64 {
        let trace = centered_trace(&p, 10.0, n_points, 0.01 * p.amp, seed_base + seed);
        let Ok(r) = fit_notch(&trace) else {
            out.errors += 1;
            continue;
        };
        let (q, u) = (r.params, r.uncertainties);
        out.f_r_within_1ppm += usize::from(rel_err(q.f_r, p.f_r, 0.0) <= 1e-6);
        out.q_loaded_within_1pct += usize::from(rel_err(q.q_loaded, p.q_loaded, 0.0) <= 0.01);
        out.q_coupling_within_1pct += usize::from(rel_err(q.q_coupling_mag, p.q_coupling_mag, 0.0) <= 0.01);
        out.phi_within_20mrad += usize::from((q.phi - p.phi).abs() <= 0.02);
        let triples = [
            (q.f_r, p.f_r, u.f_r),
            (q.q_loaded, p.q_loaded, u.q_loaded),
            (q.q_coupling_mag, p.q_coupling_mag, u.q_coupling_mag),
            (q.phi, p.phi, u.phi),
            (q.amp, p.amp, u.amp),
            (q.phase_offset, p.phase_offset, u.phase_offset),
            (q.delay, p.delay, u.delay),
            (r.q_internal, qi_true, u.q_internal),
        ];
        for (slot, (got, want, sigma)) in out.coverage.iter_mut().zip(triples) {
            *slot += usize::from((got - want).abs() <= sigma);
        }
        fitted.push(q);
    }
    (out, fitted)
}

pub fn sample2_tls() -> TlsParams {
    TlsParams::new(9.5102e4, 13.0, 0.35).unwrap()
}

/// 20 log-spaced photon numbers in [0.5, 3e4] at 26 mK, 5.952 GHz, with
/// multiplicative Gaussian noise of relative size `noise` on Q_i.
pub fn tls_curve(p: &TlsParams, delta0: f64, noise: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..20)
        .map(|i| {
            let n = 0.5 * (3e4f64 / 0.5).powf(i as f64 / 19.0);
            let q = 1.0 / (tls_loss(0.026, n, 5.952e9, p) + delta0);
            (n, q * (1.0 + noise * normal.sample(&mut rng)))
        })
        .collect()
}

pub struct TlsMonteCarloOutcome {
    pub runs: usize,
    pub errors: usize,
    /// Q⁰ and β within 5 % and n_c within 25 %, all at once.
    pub all_within: usize,
    pub q0_within: usize,
    pub beta_within: usize,
    pub n_c_within: usize,
    /// `sqrt(mean(rms²))` of the log residuals over all runs.
    pub pooled_rms_log: f64,
    /// RMS relative error of Q⁰, n_c and β over the converged runs.
    pub rms_rel: [f64; 3],
}

pub fn tls_monte_carlo(runs: usize, noise: f64) -> TlsMonteCarloOutcome {
    let p = sample2_tls();
    let mut out = TlsMonteCarloOutcome {
        runs,
        errors: 0,
        all_within: 0,
        q0_within: 0,
        beta_within: 0,
        n_c_within: 0,
        pooled_rms_log: 0.0,
        rms_rel: [0.0; 3],
    };
    let mut sum_sq = 0.0;
    let mut rel_sq = [0.0; 3];
    for seed in 0..runs as u64 {
        let curve = tls_curve(&p, 8e-7, noise, 500 + seed);
        let Ok(fit) = fit_tls(&curve, 0.026, 5.952e9) else {
            out.errors += 1;
            continue;
        };
        let q0 = rel_err(fit.params.q_tls0, p.q_tls0, 0.0) <= 0.05;
        let beta = rel_err(fit.params.beta, p.beta, 0.0) <= 0.05;
        let n_c = rel_err(fit.params.n_c, p.n_c, 0.0) <= 0.25;
        out.q0_within += usize::from(q0);
        out.beta_within += usize::from(beta);
        out.n_c_within += usize::from(n_c);
        out.all_within += usize::from(q0 && beta && n_c);
        sum_sq += fit.rms_log_residual.powi(2);
        let got = [fit.params.q_tls0, fit.params.n_c, fit.params.beta];
        let want = [p.q_tls0, p.n_c, p.beta];
        for k in 0..3 {
            rel_sq[k] += ((got[k] - want[k]) / want[k]).powi(2);
        }
    }
    let converged = (runs - out.errors).max(1) as f64;
    out.pooled_rms_log = (sum_sq / converged).sqrt();
    out.rms_rel = rel_sq.map(|s| (s / converged).sqrt());
    out
}

/// Cramér–Rao bound on the relative standard deviation of Q⁰, n_c and β
/// for the [`tls_curve`] design with log-normal noise of size `noise` and
/// δ₀ = `delta0` free.
pub fn tls_information_bound(noise: f64, delta0: f64) -> [f64; 3] {
    let p = sample2_tls();
    let theta = [p.q_tls0, p.n_c, p.beta, delta0];
    let ln_q = |t: &[f64; 4], n: f64| {
        let q = TlsParams {
            q_tls0: t[0],
            n_c: t[1],
            beta: t[2],
        };
        -(tls_loss(0.026, n, 5.952e9, &q) + t[3]).ln()
    };
    let photons: Vec<f64> = tls_curve(&p, delta0, 0.0, 0).iter().map(|c| c.0).collect();
    let mut fisher = nalgebra::Matrix4::<f64>::zeros();
    for &n in &photons {
        let mut g = nalgebra::Vector4::<f64>::zeros();
        for k in 0..4 {
            let h = 1e-5 * theta[k];
            let (mut up, mut dn) = (theta, theta);
            up[k] += h;
            dn[k] -= h;
            // Derivative with respect to the log parameter.
            g[k] = (ln_q(&up, n) - ln_q(&dn, n)) / (2.0 * h) * theta[k];
        }
        fisher += g * g.transpose();
    }
    let cov = fisher.try_inverse().expect("identifiable design") * (noise * noise);
    [cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt(), cov[(2, 2)].sqrt()]
}

/// Analytic derivatives of `s21_full` with respect to
/// `[f_r (offset in units of 10⁴ linewidths), Q_l, |Q_c|, φ, a, α, τ (ns)]`.
pub fn analytic_gradient(f: f64, p: &NotchParams) -> [Complex64; 7] {
    let i = Complex64::i();
    let x = f / p.f_r - 1.0;
    let d = Complex64::new(1.0, 2.0 * p.q_loaded * x);
    let e_phi = Complex64::from_polar(1.0, p.phi);
    let r = p.q_loaded / p.q_coupling_mag;
    let env = Complex64::from_polar(p.amp, p.phase_offset - 2.0 * PI * f * p.delay);
    let s = 1.0 - r * e_phi / d;
    let full = env * s;
    let ds_dx = r * e_phi * 2.0 * i * p.q_loaded / (d * d);
    [
        env * ds_dx * (-f / (p.f_r * p.f_r)) * (1e4 * p.f_r / p.q_loaded),
        env * (-(e_phi / p.q_coupling_mag) / (d * d)),
        env * (p.q_loaded / (p.q_coupling_mag * p.q_coupling_mag)) * e_phi / d,
        env * (-i * r * e_phi / d),
        full / p.amp,
        i * full,
        -2.0 * PI * i * f * full * 1e-9,
    ]
}

/// Largest `|numeric − analytic|/scale` over `cases` grid points, six
/// random frequencies each, where `scale` is the largest magnitude in the
/// column.
pub fn jacobian_check_worst(cases: usize, grid_seed: u64, freq_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(freq_seed);
    let mut worst = 0.0f64;
    for (p, _) in notch_grid(cases, grid_seed) {
        let freqs: Vec<f64> = (0..6)
            .map(|_| p.f_r * (1.0 + rng.random_range(-3.0..3.0) / p.q_loaded))
            .collect();
        let as_vec = |v: &[f64]| -> Vec<f64> {
            let q = NotchParams {
                f_r: p.f_r + v[0] * 1e4 * p.f_r / p.q_loaded,
                q_loaded: v[1],
                q_coupling_mag: v[2],
                phi: v[3],
                amp: v[4],
                phase_offset: v[5],
                delay: v[6] * 1e-9,
            };
            freqs
                .iter()
                .flat_map(|&f| {
                    let s = s21_full(f, &q);
                    [s.re, s.im]
                })
                .collect()
        };
        let x = [
            0.0,
            p.q_loaded,
            p.q_coupling_mag,
            p.phi,
            p.amp,
            p.phase_offset,
            p.delay * 1e9,
        ];
        let jac = central_jacobian(&as_vec, &x);
        for (row, &f) in freqs.iter().enumerate() {
            let grad = analytic_gradient(f, &p);
            for (col, g) in grad.iter().enumerate() {
                let num = Complex64::new(jac[(2 * row, col)], jac[(2 * row + 1, col)]);
                let scale = (0..freqs.len())
                    .map(|r| Complex64::new(jac[(2 * r, col)], jac[(2 * r + 1, col)]).norm())
                    .fold(g.norm(), f64::max);
                worst = worst.max((num - g).norm() / scale);
            }
        }
    }
    worst
}

/// Quadratic field sweep 0–240 mT in 16 mT steps with multiplicative
/// Gaussian noise of relative size `noise` on the shift.
pub fn noisy_field_sweep(k: f64, f0: f64, noise: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..16)
        .map(|i| {
            let b = 0.016 * i as f64;
            let df = field_freq_shift(b, f0, k) * (1.0 + noise * normal.sample(&mut rng));
            (b, f0 + df)
        })
        .collect()
}

/// 0–80 mT in 2 mT steps at f_r0 = 5.303 GHz with a +2 MHz step between
/// samples 8 and 9.
pub fn stepped_field_sweep() -> Vec<(f64, f64)> {
    let mut sweep: Vec<(f64, f64)> = (0..=40)
        .map(|i| {
            let b = 0.002 * i as f64;
            (b, 5.303e9 + field_freq_shift(b, 5.303e9, 0.261))
        })
        .collect();
    for p in sweep.iter_mut().skip(9) {
        p.1 += 2e6;
    }
    sweep
}

/// Complete elliptic integral of the first kind by the trapezoidal rule
/// over a full period of the π-periodic integrand, doubling the node count
/// until successive estimates agree.
pub fn quadrature_k(k: f64) -> f64 {
    let f = |t: f64| 1.0 / (1.0 - k * k * t.sin().powi(2)).sqrt();
    let mut n = 16usize;
    let mut prev = f64::NAN;
    loop {
        let h = PI / n as f64;
        let est = 0.5 * h * (0..n).map(|i| f(i as f64 * h)).sum::<f64>();
        if (est - prev).abs() <= 1e-15 * est || n > 1 << 24 {
            return est;
        }
        prev = est;
        n *= 2;
    }
}

/// Per-length `(L, C)` of a CPW on a substrate of thickness `h` from
/// conformal mapping, with every elliptic integral taken by quadrature.
pub fn cpw_line_oracle(w: f64, s: f64, eps_r: f64, h: f64) -> (f64, f64) {
    const MU_0: f64 = 1.256_637_062_12e-6;
    const EPSILON_0: f64 = 8.854_187_812_8e-12;
    let comp = |k: f64| (1.0 - k * k).sqrt();
    let k0 = w / (w + 2.0 * s);
    let k1 = (PI * w / (4.0 * h)).sinh() / (PI * (w + 2.0 * s) / (4.0 * h)).sinh();
    let ratio0 = quadrature_k(comp(k0)) / quadrature_k(k0);
    let q = 0.5 * quadrature_k(k1) / quadrature_k(comp(k1)) * ratio0;
    let eps_eff = 1.0 + q * (eps_r - 1.0);
    (MU_0 / 4.0 * ratio0, 4.0 * EPSILON_0 * eps_eff / ratio0)
}

/// `Re Ψ(1/2 + i·y)` from the series `−γ + Σ (1/(n+1) − Re 1/(n+1/2+iy))`,
/// summed directly up to `N` and closed with an Euler–Maclaurin tail.
pub fn digamma_series_oracle(y: f64) -> f64 {
    const GAMMA: f64 = 0.577_215_664_901_532_9;
    const N: usize = 20_000;
    let a = 0.5;
    let y2 = y * y;
    let g = |n: f64| 1.0 / (n + 1.0) - (n + a) / ((n + a).powi(2) + y2);
    let dg = |n: f64| {
        let u = (n + a).powi(2);
        -1.0 / (n + 1.0).powi(2) - (y2 - u) / (u + y2).powi(2)
    };
    let n = N as f64;
    let tail = -(n + 1.0).ln() + 0.5 * ((n + a).powi(2) + y2).ln() + 0.5 * g(n) - dg(n) / 12.0;
    // Smallest terms first.
    let head: f64 = (0..N).rev().map(|k| g(k as f64)).sum();
    -GAMMA + head + tail
}

const FUZZ_TOKENS: &[&[u8]] = &[
    b"nan",
    b"inf",
    b"-1e999",
    b"1e400",
    b"#",
    b"!",
    b",",
    b"\n",
    b"\r\n",
    b" ",
    b"\t",
    b"-",
    b"+",
    b"e",
    b"# GHz S DB R 50",
    b"# Hz Z RI R 50",
    b"R",
    b"0",
    b"0x1F",
    b"\xff\xfe",
    b"\xc3\x28",
    b"\"",
    b"freq_hz,re,im",
];

/// One random structural or byte-level mutation of `input`.
pub fn mutate(input: &[u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = input.to_vec();
    let rounds = rng.random_range(1..4);
    for _ in 0..rounds {
        let len = out.len();
        let at = if len == 0 { 0 } else { rng.random_range(0..=len) };
        match rng.random_range(0..9) {
            0 if len > 0 => {
                let i = rng.random_range(0..len);
                out[i] ^= 1 << rng.random_range(0..8);
            }
            1 => out.insert(at, rng.random()),
            2 if len > 0 => {
                let end = (at + rng.random_range(1..16)).min(len);
                out.drain(at.min(len)..end);
            }
            3 => {
                let token = FUZZ_TOKENS[rng.random_range(0..FUZZ_TOKENS.len())];
                out.splice(at..at, token.iter().copied());
            }
            4 => out.truncate(at),
            5 | 6 => {
                // Line-level edits: duplicate, drop or swap whole lines.
                let mut lines: Vec<Vec<u8>> = out.split(|&b| b == b'\n').map(<[u8]>::to_vec).collect();
                if lines.len() >= 2 {
                    let i = rng.random_range(0..lines.len());
                    let j = rng.random_range(0..lines.len());
                    match rng.random_range(0..3) {
                        0 => lines.insert(j, lines[i].clone()),
                        1 => {
                            lines.remove(i);
                        }
                        _ => lines.swap(i, j),
                    }
                }
                out = lines.join(&b'\n');
            }
            7 => {
                // Replace a digit run with an extreme value.
                if let Some(i) = out.iter().skip(at).position(u8::is_ascii_digit) {
                    let start = at + i;
                    let end = out[start..]
                        .iter()
                        .position(|b| !b.is_ascii_digit())
                        .map_or(out.len(), |e| start + e);
                    let value: &[u8] = [&b"1e308"[..], b"0", b"-0", b"99999999999999999999"][rng.random_range(0..4)];
                    out.splice(start..end, value.iter().copied());
                }
            }
            _ => {
                let i = rng.random_range(0..=len);
                out.splice(i..i, b" ".iter().copied());
            }
        }
    }
    out
}

/// Number of lines a line-numbered error may point at.
pub fn line_count(bytes: &[u8]) -> usize {
    bytes.iter().filter(|&&b| b == b'\n').count() + 1
}
