use num_complex::Complex64;

use super::lsq::{least_squares_fit, FitOptions};
use super::NumericsError;

/// Circle in the plane, with the RMS geometric distance of the fitted points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle2D {
    pub center_re: f64,
    pub center_im: f64,
    pub radius: f64,
    pub rms: f64,
}

impl Circle2D {
    fn with_rms(center: Complex64, radius: f64, points: &[Complex64]) -> Self {
        let ss: f64 = points.iter().map(|p| ((p - center).norm() - radius).powi(2)).sum();
        Self {
            center_re: center.re,
            center_im: center.im,
            radius,
            rms: (ss / points.len() as f64).sqrt(),
        }
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(self.center_re, self.center_im)
    }
}

struct Normalized {
    points: Vec<Complex64>,
    mean: Complex64,
    scale: f64,
}

fn normalize(points: &[Complex64]) -> Result<Normalized, NumericsError> {
    if points.len() < 3 {
        return Err(NumericsError::Degenerate("fewer than three points"));
    }
    if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
        return Err(NumericsError::Degenerate("non-finite point"));
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Complex64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        sxx += d.re * d.re;
        syy += d.im * d.im;
        sxy += d.re * d.im;
    }
    let trace = sxx + syy;
    if trace == 0.0 {
        return Err(NumericsError::Degenerate("all points coincide"));
    }
    // Smallest eigenvalue of the scatter matrix vanishes for collinear data.
    let det = sxx * syy - sxy * sxy;
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let lmax = 0.5 * trace + disc;
    let lmin = det / lmax;
    if lmin <= 1e-20 * lmax {
        return Err(NumericsError::Degenerate("points are collinear"));
    }
    let scale = (trace / n).sqrt();
    Ok(Normalized {
        points: points.iter().map(|p| (p - mean) / scale).collect(),
        mean,
        scale,
    })
}

/// Algebraic circle fit with Taubin's normalization, solved by Newton
/// iteration on the characteristic polynomial.
pub fn taubin_circle(points: &[Complex64]) -> Result<Circle2D, NumericsError> {
    let norm = normalize(points)?;
    let (c, r) = taubin_normalized(&norm.points)?;
    Ok(Circle2D::with_rms(norm.mean + c * norm.scale, r * norm.scale, points))
}

fn taubin_normalized(points: &[Complex64]) -> Result<(Complex64, f64), NumericsError> {
    let n = points.len() as f64;
    let (mut mxx, mut myy, mut mxy, mut mxz, mut myz, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (x, y) = (p.re, p.im);
        let z = x * x + y * y;
        mxx += x * x;
        myy += y * y;
        mxy += x * y;
        mxz += x * z;
        myz += y * z;
        mzz += z * z;
    }
    mxx /= n;
    myy /= n;
    mxy /= n;
    mxz /= n;
    myz /= n;
    mzz /= n;

    let mz = mxx + myy;
    let cov_xy = mxx * myy - mxy * mxy;
    let var_z = mzz - mz * mz;
    let a3 = 4.0 * mz;
    let a2 = -3.0 * mz * mz - mzz;
    let a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
    let a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;

    let (mut x, mut y) = (0.0_f64, a0);
    for _ in 0..100 {
        let dy = a1 + x * (2.0 * a2 + 3.0 * a3 * x);
        let x_new = x - y / dy;
        if x_new == x || !x_new.is_finite() {
            break;
        }
        let y_new = a0 + x_new * (a1 + x_new * (a2 + x_new * a3));
        if y_new.abs() >= y.abs() {
            break;
        }
        x = x_new;
        y = y_new;
    }

    let det = x * x - x * mz + cov_xy;
    if det == 0.0 || !det.is_finite() {
        return Err(NumericsError::Degenerate("algebraic fit has no finite center"));
    }
    let cx = (mxz * (myy - x) - myz * mxy) / det / 2.0;
    let cy = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
    let r = (cx * cx + cy * cy + mz).sqrt();
    if !r.is_finite() {
        return Err(NumericsError::Degenerate("algebraic fit has no finite center"));
    }
    Ok((Complex64::new(cx, cy), r))
}

/// Taubin estimate followed by a geometric least-squares refinement of the
/// orthogonal distances.
pub fn circle_fit(points: &[Complex64]) -> Result<Circle2D, NumericsError> {
    let norm = normalize(points)?;
    let (c0, r0) = taubin_normalized(&norm.points)?;
    let pts = &norm.points;
    let residuals = |p: &[f64]| -> Vec<f64> {
        let c = Complex64::new(p[0], p[1]);
        pts.iter().map(|z| (z - c).norm() - p[2]).collect()
    };
    let (c, r) = match least_squares_fit(residuals, &[c0.re, c0.im, r0], None, &FitOptions::default()) {
        Ok(fit) if fit.params.iter().all(|v| v.is_finite()) => {
            (Complex64::new(fit.params[0], fit.params[1]), fit.params[2].abs())
        }
        _ => (c0, r0),
    };
    Ok(Circle2D::with_rms(norm.mean + c * norm.scale, r * norm.scale, points))
}
