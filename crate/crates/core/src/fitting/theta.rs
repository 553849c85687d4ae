//! Field-angle fit to relative Λ-emission intensities.

use serde::{Deserialize, Serialize};

use super::lm::invert_spd;
use super::stark::Estimate;
use crate::error::{ensure_finite, Error, Result};
use crate::levels::{lambda_emission_fraction, FineStructureParams, LambdaNormalization};

/// One measured point: transverse splitting (GHz) and relative Λ intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub delta_perp: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    /// Degrees, in [0, 60].
    pub theta_r: Estimate,
    /// Overall scale between model fraction and data.
    pub scale: Estimate,
    pub residual_rms: f64,
    /// False when the data do not reach any maximum of the model curve, in
    /// which case the angle is poorly constrained.
    pub well_conditioned: bool,
}

const GRID_STEP: f64 = 0.5;

fn model(params: &FineStructureParams, theta: f64, data: &[LambdaPoint], norm: LambdaNormalization) -> Result<Vec<f64>> {
    data.iter().map(|p| lambda_emission_fraction(params, theta, p.delta_perp, norm)).collect()
}

/// Closed-form best scale and residual sum of squares at fixed θ.
fn profile_cost(m: &[f64], data: &[LambdaPoint]) -> (f64, f64) {
    let mm: f64 = m.iter().map(|v| v * v).sum();
    let my: f64 = m.iter().zip(data).map(|(v, p)| v * p.intensity).sum();
    let scale = if mm > 0.0 { my / mm } else { 0.0 };
    let rss = m.iter().zip(data).map(|(v, p)| (scale * v - p.intensity).powi(2)).sum();
    (scale, rss)
}

/// Fits θ_r and an overall scale by least squares over θ ∈ [0, 60].
///
/// A 0.5° grid locates the basin, golden-section search refines it, and the
/// standard errors come from the linearized two-parameter covariance scaled by
/// the residual variance.
pub fn fit_theta_r(
    data: &[LambdaPoint],
    params: &FineStructureParams,
    normalization: LambdaNormalization,
) -> Result<ThetaFit> {
    if data.len() < 6 {
        return Err(Error::InvalidArgument(format!("need at least 6 points, got {}", data.len())));
    }
    for p in data {
        ensure_finite("delta_perp", p.delta_perp)?;
        ensure_finite("intensity", p.intensity)?;
    }
    let cost = |theta: f64| -> Result<f64> { Ok(profile_cost(&model(params, theta, data, normalization)?, data).1) };

    let n_grid = (60.0 / GRID_STEP) as usize;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..=n_grid {
        let t = k as f64 * GRID_STEP;
        let c = cost(t)?;
        if c < best.1 {
            best = (t, c);
        }
    }

    // Golden-section refinement inside the neighbouring grid cells.
    let (mut a, mut b) = ((best.0 - GRID_STEP).max(0.0), (best.0 + GRID_STEP).min(60.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = cost(x1)?;
    let mut f2 = cost(x2)?;
    while b - a > 1e-7 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = cost(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = cost(x2)?;
        }
    }
    let theta = 0.5 * (a + b);
    let theta = if cost(theta)? <= best.1 { theta } else { best.0 };

    let m = model(params, theta, data, normalization)?;
    let (scale, rss) = profile_cost(&m, data);
    let n = data.len();

    // Jacobian columns: ∂/∂θ (finite difference, one-sided at the domain edges) and ∂/∂scale.
    let h = 0.05;
    let (lo, hi) = ((theta - h).max(0.0), (theta + h).min(60.0));
    let m_lo = model(params, lo, data, normalization)?;
    let m_hi = model(params, hi, data, normalization)?;
    let d_theta: Vec<f64> = m_lo.iter().zip(&m_hi).map(|(l, u)| scale * (u - l) / (hi - lo)).collect();
    let jtj = nalgebra::DMatrix::from_row_slice(
        2,
        2,
        &[
            d_theta.iter().map(|v| v * v).sum(),
            d_theta.iter().zip(&m).map(|(a, b)| a * b).sum(),
            d_theta.iter().zip(&m).map(|(a, b)| a * b).sum(),
            m.iter().map(|v| v * v).sum(),
        ],
    );
    let s2 = rss / (n - 2) as f64;
    let (theta_se, scale_se) = match invert_spd(&jtj) {
        Some(c) => ((c[(0, 0)] * s2).max(0.0).sqrt(), (c[(1, 1)] * s2).max(0.0).sqrt()),
        None => (f64::INFINITY, f64::INFINITY),
    };

    Ok(ThetaFit {
        theta_r: Estimate::new(theta, theta_se),
        scale: Estimate::new(scale, scale_se),
        residual_rms: (rss / n as f64).sqrt(),
        well_conditioned: spans_a_maximum(params, theta, data, normalization)?,
    })
}

/// Whether the δ⊥ range of the data contains a local maximum of the model.
fn spans_a_maximum(
    params: &FineStructureParams,
    theta: f64,
    data: &[LambdaPoint],
    norm: LambdaNormalization,
) -> Result<bool> {
    let lo = data.iter().map(|p| p.delta_perp).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|p| p.delta_perp).fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(false);
    }
    let steps = 200;
    let vals: Vec<f64> = (0..=steps)
        .map(|k| lambda_emission_fraction(params, theta, lo + (hi - lo) * k as f64 / steps as f64, norm))
        .collect::<Result<_>>()?;
    Ok(vals.windows(3).any(|w| w[1] > w[0] && w[1] >= w[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(theta: f64) -> Vec<LambdaPoint> {
        let p = FineStructureParams::default();
        (0..=40)
            .map(|k| {
                let d = 0.5 * k as f64;
                LambdaPoint {
                    delta_perp: d,
                    intensity: 2.0 * lambda_emission_fraction(&p, theta, d, LambdaNormalization::Bare).unwrap(),
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_recovery() {
        let fit = fit_theta_r(&synth(15.0), &FineStructureParams::default(), LambdaNormalization::Bare).unwrap();
        assert!((fit.theta_r.value - 15.0).abs() < 1e-3, "{:?}", fit.theta_r);
        assert!((fit.scale.value - 2.0).abs() < 1e-6);
        assert!(fit.well_conditioned);
    }

    #[test]
    fn data_far_from_anticrossings_flagged() {
        let p = FineStructureParams::default();
        let data: Vec<LambdaPoint> = (0..8)
            .map(|k| {
                let d = 40.0 + k as f64;
                LambdaPoint { delta_perp: d, intensity: lambda_emission_fraction(&p, 15.0, d, LambdaNormalization::Bare).unwrap() }
            })
            .collect();
        let fit = fit_theta_r(&data, &p, LambdaNormalization::Bare).unwrap();
        assert!(!fit.well_conditioned);
    }

    #[test]
    fn too_few_points_rejected() {
        let data = synth(15.0)[..5].to_vec();
        assert!(fit_theta_r(&data, &FineStructureParams::default(), LambdaNormalization::Bare).is_err());
    }
}
