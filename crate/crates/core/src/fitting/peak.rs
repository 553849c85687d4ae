//! Single-peak fits with Poisson weights.
//!
//! Parameters are ordered `[center, fwhm, amplitude, offset]`; `amplitude` is
//! the peak height above `offset`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LeastSquaresProblem, LmOptions};
use crate::error::{Error, Result};

const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Lorentzian,
    Gaussian,
}

impl Profile {
    pub fn eval(self, p: &[f64; 4], x: f64) -> f64 {
        let [c, w, a, o] = *p;
        match self {
            Profile::Lorentzian => {
                let u = 2.0 * (x - c) / w;
                a / (1.0 + u * u) + o
            }
            Profile::Gaussian => a * (-FOUR_LN2 * (x - c).powi(2) / (w * w)).exp() + o,
        }
    }

    /// Partial derivatives of the profile with respect to the four parameters.
    pub fn gradient(self, p: &[f64; 4], x: f64) -> [f64; 4] {
        let [c, w, a, _] = *p;
        match self {
            Profile::Lorentzian => {
                let u = 2.0 * (x - c) / w;
                let den = 1.0 + u * u;
                let den2 = den * den;
                [a * 4.0 * u / (w * den2), a * 2.0 * u * u / (w * den2), 1.0 / den, 1.0]
            }
            Profile::Gaussian => {
                let d = x - c;
                let g = (-FOUR_LN2 * d * d / (w * w)).exp();
                [a * g * 2.0 * FOUR_LN2 * d / (w * w), a * g * 2.0 * FOUR_LN2 * d * d / (w * w * w), g, 1.0]
            }
        }
    }

    /// Integrated area of a unit-amplitude profile of the given FWHM.
    pub fn unit_area(self, fwhm: f64) -> f64 {
        match self {
            Profile::Lorentzian => std::f64::consts::PI * fwhm / 2.0,
            Profile::Gaussian => fwhm * (std::f64::consts::PI / FOUR_LN2).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub profile: Profile,
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub covariance: [[f64; 4]; 4],
    pub converged: bool,
    /// ½ Σ w·r² at the solution.
    pub cost: f64,
    pub iterations: usize,
}

impl PeakFit {
    pub fn params(&self) -> [f64; 4] {
        [self.center, self.fwhm, self.amplitude, self.offset]
    }

    pub fn std_errors(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.covariance[i][i].max(0.0).sqrt())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.profile.eval(&self.params(), x)
    }

    /// Area above the offset, in data units × x units.
    pub fn area(&self) -> f64 {
        self.amplitude * self.profile.unit_area(self.fwhm)
    }
}

/// Weighted least-squares objective for one peak.
pub struct PeakProblem<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub sqrt_w: Vec<f64>,
    pub profile: Profile,
}

impl<'a> PeakProblem<'a> {
    /// Poisson weights `1 / max(y, 1)`.
    pub fn new(x: &'a [f64], y: &'a [f64], profile: Profile) -> Self {
        let sqrt_w = y.iter().map(|&v| 1.0 / v.max(1.0).sqrt()).collect();
        Self { x, y, sqrt_w, profile }
    }

    /// ½ Σ w (f(x) − y)².
    pub fn objective(&self, p: &[f64; 4]) -> f64 {
        0.5 * self
            .x
            .iter()
            .zip(self.y)
            .zip(&self.sqrt_w)
            .map(|((&x, &y), &s)| (s * (self.profile.eval(p, x) - y)).powi(2))
            .sum::<f64>()
    }

    /// Analytic gradient of [`Self::objective`].
    pub fn objective_gradient(&self, p: &[f64; 4]) -> [f64; 4] {
        let mut g = [0.0; 4];
        for ((&x, &y), &s) in self.x.iter().zip(self.y).zip(&self.sqrt_w) {
            let r = self.profile.eval(p, x) - y;
            let d = self.profile.gradient(p, x);
            for k in 0..4 {
                g[k] += s * s * r * d[k];
            }
        }
        g
    }
}

fn to_array(p: &DVector<f64>) -> [f64; 4] {
    [p[0], p[1], p[2], p[3]]
}

impl LeastSquaresProblem for PeakProblem<'_> {
    fn n_params(&self) -> usize {
        4
    }

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let q = to_array(p);
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).zip(&self.sqrt_w).map(|((&x, &y), &s)| s * (self.profile.eval(&q, x) - y)),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let q = to_array(p);
        let mut j = DMatrix::zeros(self.x.len(), 4);
        for (i, (&x, &s)) in self.x.iter().zip(&self.sqrt_w).enumerate() {
            let d = self.profile.gradient(&q, x);
            for k in 0..4 {
                j[(i, k)] = s * d[k];
            }
        }
        j
    }
}

/// Starting values from the data: argmax for the center, a low quantile for
/// the offset and the half-maximum run for the width.
pub fn initial_guess(x: &[f64], y: &[f64]) -> Result<[f64; 4]> {
    validate_data(x, y)?;
    let n = x.len();
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let offset = sorted[n / 5];
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))).unwrap();
    let amplitude = ymax - offset;
    let half = offset + 0.5 * amplitude;
    let mut lo = imax;
    while lo > 0 && y[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < n && y[hi + 1] >= half {
        hi += 1;
    }
    let spacing = (x[n - 1] - x[0]).abs() / (n - 1) as f64;
    let fwhm = ((x[hi] - x[lo]).abs() + spacing).max(2.0 * spacing);
    let (mut sw, mut swx) = (0.0, 0.0);
    for i in lo..=hi {
        let w = y[i] - offset;
        sw += w;
        swx += w * x[i];
    }
    let center = if sw > 0.0 { swx / sw } else { x[imax] };
    Ok([center, fwhm, amplitude, offset])
}

fn validate_data(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("x and y lengths differ".into()));
    }
    if x.len() < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite data".into()));
    }
    let (min, max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if max - min <= 0.0 {
        return Err(Error::DegenerateData("data are flat".into()));
    }
    Ok(())
}

/// Fits one peak to `(x, y)`.
///
/// On non-convergence the best iterate is returned with `converged = false`.
pub fn fit_peak(x: &[f64], y: &[f64], profile: Profile, init: Option<&PeakFit>) -> Result<PeakFit> {
    validate_data(x, y)?;
    let start = match init {
        Some(f) => f.params(),
        None => initial_guess(x, y)?,
    };
    let problem = PeakProblem::new(x, y, profile);
    let report = minimize(&problem, DVector::from_row_slice(&start), LmOptions::default());
    let p = to_array(&report.params);
    let cov = report.covariance(1.0);
    let mut covariance = [[f64::NAN; 4]; 4];
    if let Some(c) = &cov {
        for i in 0..4 {
            for j in 0..4 {
                covariance[i][j] = 0.5 * (c[(i, j)] + c[(j, i)]);
            }
        }
    }
    let converged = report.converged && cov.is_some() && p.iter().all(|v| v.is_finite()) && p[1] != 0.0;
    Ok(PeakFit {
        profile,
        center: p[0],
        fwhm: p[1].abs(),
        amplitude: p[2],
        offset: p[3],
        covariance,
        converged,
        cost: report.cost,
        iterations: report.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_lorentzian_recovered_exactly() {
        let x = grid(61, 0.0, 0.6);
        let truth = [0.3, 0.06, 500.0, 20.0];
        let y: Vec<f64> = x.iter().map(|&v| Profile::Lorentzian.eval(&truth, v)).collect();
        let fit = fit_peak(&x, &y, Profile::Lorentzian, None).unwrap();
        assert!(fit.converged);
        assert!((fit.center - 0.3).abs() < 1e-6);
        assert!((fit.fwhm - 0.06).abs() < 1e-6);
    }

    #[test]
    fn noiseless_gaussian_recovered() {
        let x = grid(80, -4.0, 4.0);
        let truth = [0.4, 1.4, 300.0, 5.0];
        let y: Vec<f64> = x.iter().map(|&v| Profile::Gaussian.eval(&truth, v)).collect();
        let fit = fit_peak(&x, &y, Profile::Gaussian, None).unwrap();
        assert!((fit.fwhm - 1.4).abs() < 1e-6);
        assert!((fit.area() - 300.0 * 1.4 * (std::f64::consts::PI / FOUR_LN2).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn flat_data_is_an_error() {
        let x = grid(10, 0.0, 1.0);
        let y = vec![4.0; 10];
        assert!(matches!(fit_peak(&x, &y, Profile::Lorentzian, None), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(fit_peak(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0], Profile::Gaussian, None).is_err());
    }

    #[test]
    fn mirrored_data_mirrors_center() {
        let x = grid(41, -1.0, 1.0);
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| Profile::Lorentzian.eval(&[0.17, 0.3, 80.0, 3.0], v) + if i % 3 == 0 { 2.0 } else { 0.0 })
            .collect();
        let xm: Vec<f64> = x.iter().rev().map(|v| -v).collect();
        let ym: Vec<f64> = y.iter().rev().copied().collect();
        let a = fit_peak(&x, &y, Profile::Lorentzian, None).unwrap();
        let b = fit_peak(&xm, &ym, Profile::Lorentzian, None).unwrap();
        assert!((a.center + b.center).abs() < 1e-7);
        assert!((a.fwhm - b.fwhm).abs() < 1e-7);
    }

    #[test]
    fn refit_from_solution_is_idempotent() {
        let x = grid(41, -1.0, 1.0);
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| Profile::Gaussian.eval(&[-0.1, 0.5, 60.0, 4.0], v) + ((i * 7) % 5) as f64)
            .collect();
        let a = fit_peak(&x, &y, Profile::Gaussian, None).unwrap();
        let b = fit_peak(&x, &y, Profile::Gaussian, Some(&a)).unwrap();
        for (p, q) in a.params().iter().zip(b.params()) {
            assert!((p - q).abs() < 1e-7 * (1.0 + p.abs()), "{p} vs {q}");
        }
    }
}
