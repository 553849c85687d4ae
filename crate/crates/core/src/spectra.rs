//! Synthetic emission spectra, integrated line rates and the ground-state
//! polarization bound.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

use crate::error::{ensure_finite, Error, Result};
use crate::fitting::PeakFit;
use crate::levels::TransitionLine;
use crate::rng::{poisson, rng_for_stream, stream};

/// Spectrometer response and acquisition settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentModel {
    /// Gaussian instrument FWHM, GHz.
    pub resolution_fwhm: f64,
    /// Exposure per frame, s.
    pub exposure: f64,
    /// Background counts per second per bin.
    pub background_rate: f64,
    /// Counts per second per unit line intensity.
    pub collection_efficiency: f64,
}

impl Default for InstrumentModel {
    fn default() -> Self {
        Self { resolution_fwhm: 0.9, exposure: 60.0, background_rate: 0.5, collection_efficiency: 50.0 }
    }
}

impl InstrumentModel {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("resolution_fwhm", self.resolution_fwhm),
            ("exposure", self.exposure),
            ("background_rate", self.background_rate),
            ("collection_efficiency", self.collection_efficiency),
        ] {
            ensure_finite(k, v)?;
        }
        if self.resolution_fwhm <= 0.0 {
            return Err(Error::InvalidArgument("resolution_fwhm must be > 0".into()));
        }
        if self.exposure <= 0.0 {
            return Err(Error::InvalidArgument("exposure must be > 0".into()));
        }
        if self.background_rate < 0.0 || self.collection_efficiency < 0.0 {
            return Err(Error::InvalidArgument("background_rate and collection_efficiency must be >= 0".into()));
        }
        Ok(())
    }
}

/// Uniform frequency axis given by its first bin center, spacing and length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAxis {
    pub start: f64,
    pub step: f64,
    pub n: usize,
}

impl FrequencyAxis {
    pub fn new(start: f64, step: f64, n: usize) -> Result<Self> {
        let a = Self { start, step, n };
        a.validate()?;
        Ok(a)
    }

    /// Axis covering `[lo, hi]` with bin centers at both ends.
    pub fn spanning(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("axis needs at least 2 bins".into()));
        }
        Self::new(lo, (hi - lo) / (n - 1) as f64, n)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("axis start", self.start)?;
        ensure_finite("axis step", self.step)?;
        if self.n == 0 {
            return Err(Error::InvalidArgument("frequency axis is empty".into()));
        }
        if self.step <= 0.0 {
            return Err(Error::InvalidArgument("axis must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn center(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }

    /// Index of the bin containing `f`, if any.
    pub fn bin_of(&self, f: f64) -> Option<usize> {
        let k = ((f - self.start) / self.step + 0.5).floor();
        (k >= 0.0 && (k as usize) < self.n).then_some(k as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectrumMeta {
    /// Applied tuning voltage, V.
    pub voltage: f64,
    /// Acquisition start time, s.
    pub timestamp: f64,
    pub dark: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freq_axis: FrequencyAxis,
    pub counts: Vec<u64>,
    /// s.
    pub exposure: f64,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn validate(&self) -> Result<()> {
        self.freq_axis.validate()?;
        if self.counts.len() != self.freq_axis.n {
            return Err(Error::InvalidArgument(format!(
                "counts length {} does not match axis length {}",
                self.counts.len(),
                self.freq_axis.n
            )));
        }
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(Error::InvalidArgument("exposure must be > 0".into()));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.freq_axis.centers()
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

fn sigma_of_fwhm(fwhm: f64) -> f64 {
    fwhm / (8.0 * std::f64::consts::LN_2).sqrt()
}

/// Fraction of a unit Gaussian centred at `mu` that falls in `[a, b]`.
fn gaussian_mass(mu: f64, sigma: f64, a: f64, b: f64) -> f64 {
    let s = sigma * std::f64::consts::SQRT_2;
    0.5 * (erf((b - mu) / s) - erf((a - mu) / s))
}

/// Fraction of a Gaussian line inside ±`half_width_fwhm`·FWHM of its center.
pub fn gaussian_window_coverage(half_width_fwhm: f64) -> f64 {
    erf(half_width_fwhm * (4.0 * std::f64::consts::LN_2).sqrt())
}

/// Expected counts per bin before Poisson sampling.
pub fn expected_emission_counts(lines: &[TransitionLine], inst: &InstrumentModel, axis: &FrequencyAxis) -> Result<Vec<f64>> {
    inst.validate()?;
    axis.validate()?;
    for l in lines {
        ensure_finite("line frequency", l.frequency)?;
        ensure_finite("line intensity", l.intensity)?;
        if l.intensity < 0.0 {
            return Err(Error::InvalidArgument("line intensity must be >= 0".into()));
        }
    }
    let sigma = sigma_of_fwhm(inst.resolution_fwhm);
    let bg = inst.background_rate * inst.exposure;
    let half = 0.5 * axis.step;
    Ok((0..axis.n)
        .map(|i| {
            let c = axis.center(i);
            bg + lines
                .iter()
                .map(|l| l.intensity * inst.collection_efficiency * inst.exposure * gaussian_mass(l.frequency, sigma, c - half, c + half))
                .sum::<f64>()
        })
        .collect())
}

/// Renders one exposure: each line is broadened to the instrument resolution,
/// integrated over the bins, added to the background and Poisson-sampled.
pub fn render_emission_spectrum(
    lines: &[TransitionLine],
    inst: &InstrumentModel,
    axis: &FrequencyAxis,
    seed: u64,
) -> Result<Spectrum> {
    let expected = expected_emission_counts(lines, inst, axis)?;
    let mut rng = rng_for_stream(seed, stream::PHOTONS);
    Ok(Spectrum {
        freq_axis: *axis,
        counts: expected.iter().map(|&m| poisson(&mut rng, m)).collect(),
        exposure: inst.exposure,
        meta: SpectrumMeta { seed, ..Default::default() },
    })
}

/// Renders a sequence of frames taken at the given voltages. When
/// `dark_every` is `Some(k)`, every k-th frame is a dark exposure carrying
/// background only.
pub fn render_frame_series<F>(
    voltages: &[f64],
    mut lines_at: F,
    inst: &InstrumentModel,
    axis: &FrequencyAxis,
    seed: u64,
    dark_every: Option<usize>,
) -> Result<Vec<Spectrum>>
where
    F: FnMut(f64) -> Result<Vec<TransitionLine>>,
{
    if dark_every == Some(0) {
        return Err(Error::InvalidArgument("dark_every must be >= 1".into()));
    }
    voltages
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let dark = dark_every.is_some_and(|k| i % k == k - 1);
            let lines = if dark { Vec::new() } else { lines_at(v)? };
            let frame_seed = seed.wrapping_add(i as u64);
            let mut s = render_emission_spectrum(&lines, inst, axis, frame_seed)?;
            s.meta = SpectrumMeta { voltage: v, timestamp: i as f64 * inst.exposure, dark, seed: frame_seed };
            Ok(s)
        })
        .collect()
}

/// Integrated rate with its Poisson standard error, counts per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub error: f64,
}

fn merged_windows(peaks: &[PeakFit], half_width: f64) -> Result<Vec<(f64, f64)>> {
    let mut w: Vec<(f64, f64)> = Vec::with_capacity(peaks.len());
    for p in peaks {
        ensure_finite("peak center", p.center)?;
        if !(p.fwhm > 0.0 && p.fwhm.is_finite()) {
            return Err(Error::InvalidArgument("peak FWHM must be > 0".into()));
        }
        w.push((p.center - half_width * p.fwhm, p.center + half_width * p.fwhm));
    }
    w.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in w {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    Ok(out)
}

/// Background-subtracted count rate summed over ±1.5 FWHM around each peak.
///
/// Overlapping windows are merged so no bin is counted twice. The background
/// is the mean of all bins outside the windows.
pub fn total_zpl_rate(spectrum: &Spectrum, peaks: &[PeakFit]) -> Result<RateEstimate> {
    spectrum.validate()?;
    let windows = merged_windows(peaks, 1.5)?;
    let inside = |f: f64| windows.iter().any(|&(lo, hi)| f >= lo && f <= hi);
    let (mut n_in, mut sum_in, mut n_out, mut sum_out) = (0usize, 0.0, 0usize, 0.0);
    for (i, &c) in spectrum.counts.iter().enumerate() {
        if inside(spectrum.freq_axis.center(i)) {
            n_in += 1;
            sum_in += c as f64;
        } else {
            n_out += 1;
            sum_out += c as f64;
        }
    }
    if n_out == 0 {
        return Err(Error::InvalidArgument("no bins outside the peak windows to estimate background".into()));
    }
    let bg = sum_out / n_out as f64;
    let signal = sum_in - bg * n_in as f64;
    let var = sum_in + (n_in as f64).powi(2) * bg / n_out as f64;
    Ok(RateEstimate { rate: signal / spectrum.exposure, error: var.sqrt() / spectrum.exposure })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationBoundConfig {
    /// One-sided confidence level of the upper limit on the hidden line.
    pub confidence: f64,
    /// Half-width of the search window in units of the reference FWHM.
    pub window_half_width_fwhm: f64,
}

impl Default for PolarizationBoundConfig {
    fn default() -> Self {
        Self { confidence: 0.95, window_half_width_fwhm: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolarizationBound {
    Bounded { lower: f64, reference_counts: f64, limit_counts: f64 },
    /// The reference line does not rise above the noise floor.
    Unbounded,
}

impl PolarizationBound {
    pub fn lower(&self) -> Option<f64> {
        match self {
            PolarizationBound::Bounded { lower, .. } => Some(*lower),
            PolarizationBound::Unbounded => None,
        }
    }
}

/// Lower bound on the ground-state polarization from the absence of the
/// A2 → |±1⟩ line.
///
/// The counts `N` in a window around `a2_line_freq` are compared with the
/// background `B` predicted by the reference fit's offset. The upper limit on
/// hidden line counts is `max(N − B, 0) + z·√max(N, 1)` with `z` the one-sided
/// normal quantile, and the bound is `A_ref / (A_ref + A_limit)`.
pub fn gs_polarization_bound(
    spectrum: &Spectrum,
    a2_line_freq: f64,
    reference: &PeakFit,
    cfg: &PolarizationBoundConfig,
) -> Result<PolarizationBound> {
    spectrum.validate()?;
    ensure_finite("a2_line_freq", a2_line_freq)?;
    if !(cfg.confidence > 0.5 && cfg.confidence < 1.0) {
        return Err(Error::InvalidArgument("confidence must be in (0.5, 1)".into()));
    }
    let axis = &spectrum.freq_axis;
    let lo_edge = axis.start - 0.5 * axis.step;
    let hi_edge = axis.center(axis.n - 1) + 0.5 * axis.step;
    if a2_line_freq < lo_edge || a2_line_freq > hi_edge {
        return Err(Error::InvalidArgument("A2 window lies outside the frequency axis".into()));
    }
    let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(cfg.confidence);

    let total: u64 = spectrum.counts.iter().sum();
    if total == 0 || !(reference.fwhm > 0.0) || !reference.amplitude.is_finite() {
        return Ok(PolarizationBound::Unbounded);
    }
    let half = cfg.window_half_width_fwhm * reference.fwhm;
    let (mut n, mut bins) = (0.0, 0usize);
    for (i, &c) in spectrum.counts.iter().enumerate() {
        if (axis.center(i) - a2_line_freq).abs() <= half {
            n += c as f64;
            bins += 1;
        }
    }
    let floor = z * n.max(1.0).sqrt();
    let a_ref = reference.area() / axis.step;
    if !(a_ref > floor) {
        return Ok(PolarizationBound::Unbounded);
    }
    let b = reference.offset.max(0.0) * bins as f64;
    let a_limit = (n - b).max(0.0) + floor;
    Ok(PolarizationBound::Bounded { lower: a_ref / (a_ref + a_limit), reference_counts: a_ref, limit_counts: a_limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::{Branch, GroundSublevel};

    fn line(f: f64, i: f64) -> TransitionLine {
        TransitionLine {
            frequency: f,
            intensity: i,
            upper_index: 3,
            upper_label: "Ey".into(),
            upper_branch: Branch::Lower,
            lower_label: GroundSublevel::Zero,
        }
    }

    #[test]
    fn expectation_has_instrument_width() {
        let inst = InstrumentModel { background_rate: 0.0, ..Default::default() };
        let axis = FrequencyAxis::spanning(-5.0, 5.0, 1001).unwrap();
        let e = expected_emission_counts(&[line(0.0, 1.0)], &inst, &axis).unwrap();
        let max = e.iter().cloned().fold(0.0, f64::max);
        let above: Vec<usize> = (0..axis.n).filter(|&i| e[i] >= 0.5 * max).collect();
        let width = axis.center(*above.last().unwrap()) - axis.center(above[0]);
        assert!((width - 0.9).abs() <= axis.step + 1e-9, "{width}");
    }

    #[test]
    fn background_only_has_flat_expectation() {
        let inst = InstrumentModel { background_rate: 2.0, exposure: 3.0, ..Default::default() };
        let axis = FrequencyAxis::new(0.0, 0.1, 20).unwrap();
        let e = expected_emission_counts(&[], &inst, &axis).unwrap();
        assert!(e.iter().all(|&v| (v - 6.0).abs() < 1e-12));
    }

    #[test]
    fn empty_axis_rejected() {
        let axis = FrequencyAxis { start: 0.0, step: 0.1, n: 0 };
        assert!(render_emission_spectrum(&[], &InstrumentModel::default(), &axis, 1).is_err());
    }

    #[test]
    fn same_seed_same_counts() {
        let axis = FrequencyAxis::spanning(-3.0, 3.0, 100).unwrap();
        let a = render_emission_spectrum(&[line(0.2, 3.0)], &InstrumentModel::default(), &axis, 9).unwrap();
        let b = render_emission_spectrum(&[line(0.2, 3.0)], &InstrumentModel::default(), &axis, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_eighth_frame_is_dark() {
        let axis = FrequencyAxis::spanning(-3.0, 3.0, 50).unwrap();
        let volts: Vec<f64> = (0..16).map(|k| k as f64).collect();
        let frames =
            render_frame_series(&volts, |_| Ok(vec![line(0.0, 10.0)]), &InstrumentModel::default(), &axis, 1, Some(8))
                .unwrap();
        let dark: Vec<usize> = frames.iter().enumerate().filter(|(_, f)| f.meta.dark).map(|(i, _)| i).collect();
        assert_eq!(dark, vec![7, 15]);
    }

    #[test]
    fn window_coverage_value() {
        // ±1.5 FWHM is ±3.53σ.
        let c = gaussian_window_coverage(1.5);
        assert!((c - 0.99959).abs() < 1e-5, "{c}");
    }

    #[test]
    fn zero_count_spectrum_is_unbounded() {
        let axis = FrequencyAxis::spanning(-5.0, 5.0, 100).unwrap();
        let s = Spectrum { freq_axis: axis, counts: vec![0; 100], exposure: 1.0, meta: Default::default() };
        let reference = PeakFit {
            profile: crate::fitting::Profile::Gaussian,
            center: 0.0,
            fwhm: 0.9,
            amplitude: 0.0,
            offset: 0.0,
            covariance: [[0.0; 4]; 4],
            converged: false,
            cost: 0.0,
            iterations: 0,
        };
        let b = gs_polarization_bound(&s, 3.0, &reference, &Default::default()).unwrap();
        assert_eq!(b, PolarizationBound::Unbounded);
    }
}
