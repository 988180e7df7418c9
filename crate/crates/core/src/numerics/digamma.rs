use num_complex::Complex64;

/// Magnitude above which the asymptotic series is used directly.
const ASYMPTOTIC_THRESHOLD: f64 = 8.0;

/// `B_{2k} / (2k)` for k = 1..=7.
const ASYMPTOTIC_COEFFS: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// Real part of the digamma function on the critical line,
/// `Re Ψ(1/2 + i·y)`.
///
/// The function is even in `y`. Small arguments are pushed above
/// `|z| = 8` with `Ψ(z) = Ψ(z + 1) − 1/z` before the asymptotic series is
/// summed.
pub fn digamma_half_line(y: f64) -> f64 {
    let mut z = Complex64::new(0.5, y.abs());
    let mut shift = Complex64::new(0.0, 0.0);
    while z.norm() <= ASYMPTOTIC_THRESHOLD {
        shift -= z.inv();
        z += 1.0;
    }
    let inv = z.inv();
    let inv2 = inv * inv;
    // Horner over powers of 1/z².
    let mut series = Complex64::new(0.0, 0.0);
    for &c in ASYMPTOTIC_COEFFS.iter().rev() {
        series = (series + c) * inv2;
    }
    (z.ln() - 0.5 * inv - series + shift).re
}
