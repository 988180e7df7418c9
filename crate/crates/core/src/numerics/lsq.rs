//! Damped Gauss–Newton (Levenberg–Marquardt) driver with a central-difference
//! Jacobian and box constraints handled by a change of variables.

use nalgebra::{DMatrix, DVector};

use super::NumericsError;

/// Closed or half-open parameter interval. Infinite ends are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn unbounded() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn positive() -> Self {
        Self::new(0.0, f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub ftol: f64,
    /// Stop once the proposed step is shorter than `xtol`.
    pub xtol: f64,
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-12,
            xtol: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// `σ²·(JᵀJ)⁻¹` in model units, `σ² = |r|²/(N − M)`.
    pub covariance: DMatrix<f64>,
    /// Euclidean norm of the final residual vector.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm at the start and after every accepted step.
    pub history: Vec<f64>,
}

impl FitResult {
    /// One-sigma uncertainty of each parameter.
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.params.len())
            .map(|i| self.covariance[(i, i)].max(0.0).sqrt())
            .collect()
    }
}

const DAMPING_UP: f64 = 3.0;
const DAMPING_DOWN: f64 = 3.0;
const DAMPING_MAX: f64 = 1e16;
const DAMPING_MIN: f64 = 1e-15;
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
enum Transform {
    Identity,
    Logistic { lower: f64, width: f64 },
    Lower(f64),
    Upper(f64),
}

impl Transform {
    fn from_bound(b: &Bound) -> Self {
        match (b.lower.is_finite(), b.upper.is_finite()) {
            (true, true) => Transform::Logistic {
                lower: b.lower,
                width: b.upper - b.lower,
            },
            (true, false) => Transform::Lower(b.lower),
            (false, true) => Transform::Upper(b.upper),
            (false, false) => Transform::Identity,
        }
    }

    fn to_internal(self, p: f64) -> f64 {
        match self {
            Transform::Identity => p,
            Transform::Logistic { lower, width } => {
                let frac = ((p - lower) / width).clamp(1e-12, 1.0 - 1e-12);
                (frac / (1.0 - frac)).ln()
            }
            Transform::Lower(lo) => (p - lo).max(1e-300).ln(),
            Transform::Upper(hi) => (hi - p).max(1e-300).ln(),
        }
    }

    fn to_external(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Logistic { lower, width } => lower + width / (1.0 + (-u).exp()),
            Transform::Lower(lo) => lo + u.exp(),
            Transform::Upper(hi) => hi - u.exp(),
        }
    }

    fn derivative(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Logistic { width, .. } => {
                let s = 1.0 / (1.0 + (-u).exp());
                width * s * (1.0 - s)
            }
            Transform::Lower(_) => u.exp(),
            Transform::Upper(_) => -u.exp(),
        }
    }
}

/// Central-difference Jacobian of `f` at `x`; rows index residuals, columns
/// parameters. The step for parameter `j` is `max(1e-8, 1e-8·|x_j|)`.
pub fn central_jacobian<F>(f: &F, x: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut probe = x.to_vec();
    let mut columns = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let step = (1e-8 * x[j].abs()).max(1e-8);
        let (up, down) = (x[j] + step, x[j] - step);
        probe[j] = up;
        let f_up = f(&probe);
        probe[j] = down;
        let f_down = f(&probe);
        probe[j] = x[j];
        let span = up - down;
        columns.push(
            f_up.iter()
                .zip(&f_down)
                .map(|(a, b)| (a - b) / span)
                .collect::<Vec<_>>(),
        );
    }
    let rows = columns.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, x.len(), |i, j| columns[j][i])
}

fn sum_squares(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `Σ rᵢ(p)²` starting from `initial`.
///
/// Every iteration first tries the undamped Gauss–Newton step when the
/// quadratic model has been reliable so far (always on the first iteration),
/// so linear problems finish in two steps. Otherwise damping is
/// multiplicative: ×3 on a rejected step, ÷3 on an accepted one, starting
/// from `options.initial_damping`. Failure to converge within `max_iterations` is reported through
/// `converged = false`, not as an error.
pub fn least_squares_fit<F>(
    model: F,
    initial: &[f64],
    bounds: Option<&[Bound]>,
    options: &FitOptions,
) -> Result<FitResult, NumericsError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = initial.len();
    let transforms: Vec<Transform> = match bounds {
        Some(b) => {
            assert_eq!(b.len(), m, "one bound per parameter");
            for (i, (bd, &p)) in b.iter().zip(initial).enumerate() {
                if !(p >= bd.lower && p <= bd.upper) {
                    return Err(NumericsError::OutOfBounds {
                        index: i,
                        value: p,
                        lower: bd.lower,
                        upper: bd.upper,
                    });
                }
            }
            b.iter().map(Transform::from_bound).collect()
        }
        None => vec![Transform::Identity; m],
    };
    let external = |u: &[f64]| -> Vec<f64> { u.iter().zip(&transforms).map(|(&v, t)| t.to_external(v)).collect() };
    let internal_model = |u: &[f64]| model(&external(u));

    let mut u: Vec<f64> = initial
        .iter()
        .zip(&transforms)
        .map(|(&p, t)| t.to_internal(p))
        .collect();
    let mut residuals = internal_model(&u);
    let n = residuals.len();
    if n < m {
        return Err(NumericsError::Underdetermined {
            residuals: n,
            params: m,
        });
    }
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFiniteResidual);
    }
    let mut cost = sum_squares(&residuals);
    let mut history = vec![cost.sqrt()];
    let mut lambda = options.initial_damping;
    let mut trust_gauss_newton = true;
    let mut iterations = 0;
    let mut converged = false;

    let mut jac = central_jacobian(&internal_model, &u);
    let rank = column_scaled_rank(&jac);
    if rank < m {
        return Err(NumericsError::SingularJacobian { rank, params: m });
    }

    'outer: while iterations < options.max_iterations {
        if cost == 0.0 {
            converged = true;
            break;
        }
        if iterations > 0 {
            jac = central_jacobian(&internal_model, &u);
        }
        let r = DVector::from_column_slice(&residuals);
        let gradient = jac.tr_mul(&r);
        let normal = jac.tr_mul(&jac);
        let diag: Vec<f64> = (0..m).map(|i| normal[(i, i)].max(1e-300)).collect();

        let mut try_undamped = trust_gauss_newton;
        loop {
            let damping = if try_undamped { 0.0 } else { lambda };
            let mut lhs = normal.clone();
            for i in 0..m {
                lhs[(i, i)] += damping * diag[i];
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&gradient)),
                None => {
                    if try_undamped {
                        try_undamped = false;
                    } else {
                        lambda *= DAMPING_UP;
                        if lambda > DAMPING_MAX {
                            converged = true;
                            break 'outer;
                        }
                    }
                    continue;
                }
            };
            if step.norm() < options.xtol {
                converged = true;
                break 'outer;
            }
            let predicted = -(2.0 * step.dot(&gradient) + step.dot(&(&normal * &step)));
            if predicted <= options.ftol * cost {
                converged = true;
                break 'outer;
            }
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_residuals = internal_model(&trial);
            let trial_cost = sum_squares(&trial_residuals);
            if trial_cost.is_finite() && trial_cost < cost {
                let ratio = (cost - trial_cost) / predicted;
                let relative_decrease = (cost - trial_cost) / cost;
                u = trial;
                residuals = trial_residuals;
                cost = trial_cost;
                history.push(cost.sqrt());
                iterations += 1;
                if !try_undamped {
                    lambda = (lambda / DAMPING_DOWN).max(DAMPING_MIN);
                }
                trust_gauss_newton = (ratio - 1.0).abs() < 0.1;
                if relative_decrease < options.ftol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            if try_undamped {
                try_undamped = false;
                continue;
            }
            lambda *= DAMPING_UP;
            if lambda > DAMPING_MAX {
                // No descent is representable at this precision: stationary.
                converged = true;
                break 'outer;
            }
        }
    }

    let params = external(&u);
    let dof = n.saturating_sub(m).max(1) as f64;
    let sigma2 = cost / dof;
    // Differencing in model units stays well conditioned when a parameter
    // sits on its bound; the chain rule through the transform is the fallback.
    let jac_model = central_jacobian(&model, &params);
    let covariance = if jac_model.iter().all(|v| v.is_finite()) {
        let inv = normal_inverse(&jac_model).map_err(|rank| NumericsError::SingularJacobian { rank, params: m })?;
        sigma2 * inv
    } else {
        let jac = central_jacobian(&internal_model, &u);
        let inv = normal_inverse(&jac).map_err(|rank| NumericsError::SingularJacobian { rank, params: m })?;
        let chain: Vec<f64> = u.iter().zip(&transforms).map(|(&v, t)| t.derivative(v)).collect();
        DMatrix::from_fn(m, m, |i, j| sigma2 * chain[i] * inv[(i, j)] * chain[j])
    };
    let covariance = 0.5 * (&covariance + covariance.transpose());

    Ok(FitResult {
        params,
        covariance,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
        history,
    })
}

fn column_norms(jac: &DMatrix<f64>) -> Vec<f64> {
    (0..jac.ncols()).map(|j| jac.column(j).norm()).collect()
}

fn column_scaled_rank(jac: &DMatrix<f64>) -> usize {
    let norms = column_norms(jac);
    let nonzero: Vec<usize> = (0..norms.len())
        .filter(|&j| norms[j] > 0.0 && norms[j].is_finite())
        .collect();
    if nonzero.is_empty() {
        return 0;
    }
    let scaled = DMatrix::from_fn(jac.nrows(), nonzero.len(), |i, k| {
        jac[(i, nonzero[k])] / norms[nonzero[k]]
    });
    let sv = scaled.singular_values();
    let smax = sv.max();
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax).count()
}

/// `(JᵀJ)⁻¹` through the SVD of the column-scaled Jacobian; `Err(rank)` when
/// the Jacobian is rank deficient.
fn normal_inverse(jac: &DMatrix<f64>) -> Result<DMatrix<f64>, usize> {
    let m = jac.ncols();
    let norms = column_norms(jac);
    let rank = column_scaled_rank(jac);
    if rank < m {
        return Err(rank);
    }
    let scaled = DMatrix::from_fn(jac.nrows(), m, |i, j| jac[(i, j)] / norms[j]);
    let svd = scaled.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut inv = DMatrix::<f64>::zeros(m, m);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let w = 1.0 / (s * s);
        for i in 0..m {
            for j in 0..m {
                inv[(i, j)] += v_t[(k, i)] * w * v_t[(k, j)];
            }
        }
    }
    Ok(DMatrix::from_fn(m, m, |i, j| inv[(i, j)] / (norms[i] * norms[j])))
}
