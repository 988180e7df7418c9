use std::f64::consts::FRAC_PI_2;

use super::NumericsError;

const AGM_MAX_ITER: usize = 64;

/// Complete elliptic integral of the first kind,
///
/// ```text
/// K(k) = ∫₀^{π/2} dθ / √(1 − k² sin²θ)
/// ```
///
/// taking the **modulus** `k` (not the parameter `m = k²`). Evaluated with the
/// arithmetic–geometric mean, `K(k) = π / (2·AGM(1, √(1 − k²)))`.
pub fn elliptic_k(k: f64) -> Result<f64, NumericsError> {
    if !(0.0..1.0).contains(&k) {
        return Err(NumericsError::Domain {
            function: "elliptic_k",
            value: k,
            reason: "modulus must satisfy 0 <= k < 1",
        });
    }
    if k == 0.0 {
        return Ok(FRAC_PI_2);
    }
    // (1 - k)(1 + k) keeps the complementary modulus accurate as k -> 1.
    let mut a = 1.0_f64;
    let mut b = ((1.0 - k) * (1.0 + k)).sqrt();
    for _ in 0..AGM_MAX_ITER {
        let mean = 0.5 * (a + b);
        if (a - b).abs() <= 4.0 * f64::EPSILON * mean {
            a = mean;
            break;
        }
        b = (a * b).sqrt();
        a = mean;
    }
    Ok(FRAC_PI_2 / a)
}
