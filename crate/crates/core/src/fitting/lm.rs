//! Damped least squares (Levenberg-Marquardt with diagonal scaling).

use nalgebra::{DMatrix, DVector};

/// A nonlinear least-squares problem `min ½‖r(p)‖²`. Residuals should already
/// carry any weights.
pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64>;

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        numerical_jacobian(|q| self.residuals(q), p)
    }
}

/// Central-difference Jacobian of a residual function.
pub fn numerical_jacobian<F>(f: F, p: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let r0 = f(p);
    let mut jac = DMatrix::zeros(r0.len(), p.len());
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1e-3);
        let mut hi = p.clone();
        let mut lo = p.clone();
        hi[j] += h;
        lo[j] -= h;
        let col = (f(&hi) - f(&lo)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub ftol: f64,
    /// Stop when the step norm falls below `xtol·(‖p‖ + xtol)`.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 200, ftol: 1e-10, xtol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: DVector<f64>,
    /// ½ Σ r² at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// JᵀJ at `params`.
    pub jtj: DMatrix<f64>,
}

impl LmReport {
    /// (JᵀJ)⁻¹ scaled by `scale`, or `None` when singular.
    pub fn covariance(&self, scale: f64) -> Option<DMatrix<f64>> {
        invert_spd(&self.jtj).map(|m| m * scale)
    }
}

/// Inverse of a symmetric positive (semi)definite matrix. Falls back to the
/// pseudo-inverse when Cholesky fails; returns `None` for a rank-deficient matrix.
pub fn invert_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.inverse());
    }
    let svd = m.clone().svd(true, true);
    let max = svd.singular_values.max();
    if max <= 0.0 || svd.singular_values.min() <= max * 1e-14 {
        return None;
    }
    svd.pseudo_inverse(0.0).ok()
}

fn half_sq(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Minimizes `problem` from `p0`.
pub fn minimize<P: LeastSquaresProblem + ?Sized>(problem: &P, p0: DVector<f64>, opts: LmOptions) -> LmReport {
    let mut p = p0;
    let mut r = problem.residuals(&p);
    let mut cost = half_sq(&r);
    let mut jac = problem.jacobian(&p);
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() == 0.0 {
            converged = true;
            break;
        }
        let diag: Vec<f64> = (0..p.len()).map(|i| jtj[(i, i)].max(1e-12)).collect();

        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for (i, d) in diag.iter().enumerate() {
                a[(i, i)] += mu * d;
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    mu *= 4.0;
                    continue;
                }
            };
            if step.norm() < opts.xtol * (p.norm() + opts.xtol) {
                converged = true;
                break;
            }
            let trial = &p + &step;
            let r_trial = problem.residuals(&trial);
            let cost_trial = half_sq(&r_trial);
            if cost_trial.is_finite() && cost_trial < cost {
                let rel = (cost - cost_trial) / cost;
                p = trial;
                r = r_trial;
                cost = cost_trial;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                if rel < opts.ftol {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // Damping exhausted without progress: we are at a minimum to
            // numerical precision.
            converged = true;
            break;
        }
        jac = problem.jacobian(&p);
    }
    let jac = problem.jacobian(&p);
    LmReport { jtj: jac.transpose() * &jac, params: p, cost, iterations, converged }
}
