//! Peak-tracking feedback on the DC tuning voltage and the lock-quality
//! metrics computed from a run.
//!
//! After each forward ramp the controller looks at the brightest bin `b_i`
//! and its counts `C_i`. Below the threshold `T` it requests a repump and
//! leaves the voltage alone; otherwise it applies
//! `δV = G·(B − mean(b over the last N valid scans))`.

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionParams, DiffusionProcess};
use crate::error::{ensure_finite, Error, Result};
use crate::fitting::{fit_peak, PeakFit, Profile};
use crate::rng::{rng_for_stream, stream};
use crate::scan::{run_scan, Emitter, ScanConfig, ScanMode, ScanRecord, StarkTuning};

/// What happened during the back-scan of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    #[default]
    Hold,
    Repump,
    Adjust,
}

/// When the repump laser is fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepumpPolicy {
    /// Only when the peak counts fall below the threshold.
    #[default]
    Threshold,
    /// After every scan.
    EveryScan,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    /// Volts per bin of error. Its sign must match the sign of the bins-per-volt response.
    pub gain_g: f64,
    pub integration_n: usize,
    /// Defaults to the center bin.
    #[serde(default)]
    pub target_bin: Option<usize>,
    /// Minimum peak counts for a scan to count as bright.
    pub threshold_t: f64,
    pub enabled: bool,
    #[serde(default)]
    pub v_dc_init: f64,
    pub v_dc_limits: [f64; 2],
    #[serde(default)]
    pub repump_policy: RepumpPolicy,
    /// Scans within this many bins of the target count as recovered.
    #[serde(default = "default_recovery_tolerance")]
    pub recovery_tolerance_bins: usize,
}

fn default_recovery_tolerance() -> usize {
    2
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            gain_g: 0.1,
            integration_n: 1,
            target_bin: None,
            threshold_t: 0.0,
            enabled: true,
            v_dc_init: 0.0,
            v_dc_limits: [-100.0, 100.0],
            repump_policy: RepumpPolicy::Threshold,
            recovery_tolerance_bins: default_recovery_tolerance(),
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self, n_bins: usize) -> Result<()> {
        ensure_finite("gain_g", self.gain_g)?;
        ensure_finite("threshold_t", self.threshold_t)?;
        ensure_finite("v_dc_init", self.v_dc_init)?;
        ensure_finite("v_dc_limits", self.v_dc_limits[0])?;
        ensure_finite("v_dc_limits", self.v_dc_limits[1])?;
        if self.integration_n == 0 {
            return Err(Error::InvalidArgument("integration_n must be >= 1".into()));
        }
        if self.threshold_t < 0.0 {
            return Err(Error::InvalidArgument("threshold_t must be >= 0".into()));
        }
        if self.v_dc_limits[0] > self.v_dc_limits[1] {
            return Err(Error::InvalidArgument("v_dc_limits must be ordered [min, max]".into()));
        }
        if let Some(b) = self.target_bin {
            if b >= n_bins {
                return Err(Error::InvalidArgument(format!("target_bin {b} outside [0, {n_bins})")));
            }
        }
        Ok(())
    }

    pub fn target(&self, n_bins: usize) -> usize {
        self.target_bin.unwrap_or(n_bins / 2)
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.v_dc_limits[0], self.v_dc_limits[1])
    }
}

/// Threshold in counts for a count rate observed over one bin dwell.
pub fn threshold_from_rate(rate_cps: f64, scan: &ScanConfig) -> f64 {
    rate_cps * scan.dwell()
}

/// `G·(B − mean(b))` for an explicit history of peak bins.
pub fn voltage_update(b_history: &[usize], gain_g: f64, target_bin: usize) -> Result<f64> {
    if b_history.is_empty() {
        return Err(Error::ContractViolation("empty peak-bin history".into()));
    }
    let mean = b_history.iter().map(|&b| b as f64).sum::<f64>() / b_history.len() as f64;
    Ok(gain_g * (target_bin as f64 - mean))
}

/// One controller decision. `history` ends with the current scan.
///
/// The average runs over the valid (above-threshold) records among the last
/// `N`; the current record is always one of them when it is valid.
pub fn controller_step(history: &[ScanRecord], cfg: &FeedbackConfig, v_dc: f64) -> Result<(f64, Action)> {
    let current = history.last().ok_or_else(|| Error::ContractViolation("empty scan history".into()))?;
    if (current.c_max as f64) < cfg.threshold_t {
        return Ok((v_dc, Action::Repump));
    }
    let n_bins = current.bin_counts.len();
    let start = history.len().saturating_sub(cfg.integration_n);
    let bins: Vec<usize> =
        history[start..].iter().filter(|r| r.c_max as f64 >= cfg.threshold_t).map(|r| r.b_max).collect();
    let dv = voltage_update(&bins, cfg.gain_g, cfg.target(n_bins))?;
    Ok((cfg.clamp(v_dc + dv), Action::Adjust))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockMetrics {
    /// Standard deviation of fitted peak positions, MHz.
    pub sigma_mhz: f64,
    /// FWHM of a Gaussian fit to the summed scans, GHz.
    pub gamma_inhom_ghz: f64,
    /// Background-subtracted mean count rate over the run, cts/s.
    pub mean_rate_cps: f64,
    pub repump_count: usize,
    /// Scans needed to return within tolerance of the target after each
    /// repump that was followed by a recovery.
    pub recovery_scans: Vec<usize>,
    pub n_fits: usize,
}

impl LockMetrics {
    pub fn median_recovery(&self) -> Option<f64> {
        median(&self.recovery_scans.iter().map(|&v| v as f64).collect::<Vec<_>>())
    }
}

pub(crate) fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Converts a ramp coordinate to GHz: identity in laser mode, the Stark slope
/// in voltage mode.
pub fn ramp_to_ghz(scan: &ScanConfig, tuning: &StarkTuning) -> f64 {
    match scan.mode {
        ScanMode::Laser => 1.0,
        ScanMode::Voltage => tuning.ghz_per_volt.abs(),
    }
}

/// Lorentzian fit of each bright scan's bins. `None` for dark scans and for
/// fits that did not converge or landed outside the scan window.
pub fn fit_scans(records: &[ScanRecord], threshold_t: f64) -> Vec<Option<PeakFit>> {
    records
        .iter()
        .map(|r| {
            if (r.c_max as f64) < threshold_t || r.c_max == 0 {
                return None;
            }
            let y: Vec<f64> = r.bin_counts.iter().map(|&c| c as f64).collect();
            let x = &r.bin_axis;
            let fit = fit_peak(x, &y, Profile::Lorentzian, None).ok()?;
            let (lo, hi) = (x[0], x[x.len() - 1]);
            (fit.converged && fit.center >= lo && fit.center <= hi && fit.amplitude > 0.0).then_some(fit)
        })
        .collect()
}

/// Lock-quality metrics from a completed run.
pub fn compute_metrics(
    records: &[ScanRecord],
    fits: &[Option<PeakFit>],
    scan: &ScanConfig,
    tuning: &StarkTuning,
    fb: &FeedbackConfig,
) -> Result<LockMetrics> {
    if records.len() != fits.len() {
        return Err(Error::InvalidArgument("records and fits differ in length".into()));
    }
    let to_ghz = ramp_to_ghz(scan, tuning);
    // In voltage mode the relevant position is where in the ramp the line
    // appears, i.e. the fitted center relative to the scan's own v_dc.
    let centers: Vec<f64> = records
        .iter()
        .zip(fits)
        .filter_map(|(r, f)| {
            f.as_ref().map(|f| match scan.mode {
                ScanMode::Laser => f.center * to_ghz,
                ScanMode::Voltage => (f.center - r.v_dc) * to_ghz,
            })
        })
        .collect();
    if centers.len() < 2 {
        return Err(Error::MetricsUnavailable(format!("{} successful fits, need at least 2", centers.len())));
    }
    let mean = centers.iter().sum::<f64>() / centers.len() as f64;
    let var = centers.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (centers.len() - 1) as f64;

    let n_bins = scan.n_bins;
    let mut summed = vec![0.0; n_bins];
    for r in records {
        for (s, &c) in summed.iter_mut().zip(&r.bin_counts) {
            *s += c as f64;
        }
    }
    let axis: Vec<f64> = (0..n_bins).map(|k| scan.ramp_offset(k)).collect();
    let gamma_inhom_ghz = match fit_peak(&axis, &summed, Profile::Gaussian, None) {
        Ok(f) => f.fwhm * to_ghz,
        Err(_) => f64::NAN,
    };

    let total: f64 = summed.iter().sum();
    let background = scan.background_rate * scan.dwell() * (n_bins * records.len()) as f64;
    let mean_rate_cps = (total - background) / (records.len() as f64 * scan.period);

    let repump_count = records.iter().filter(|r| r.repump_applied).count();
    let target = fb.target(n_bins);
    let mut recovery_scans = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if !r.repump_applied {
            continue;
        }
        for (j, later) in records[i + 1..].iter().enumerate() {
            if later.repump_applied {
                break;
            }
            let bright = later.c_max as f64 >= fb.threshold_t;
            if bright && later.b_max.abs_diff(target) <= fb.recovery_tolerance_bins {
                recovery_scans.push(j + 1);
                break;
            }
        }
    }

    Ok(LockMetrics {
        sigma_mhz: var.sqrt() * 1e3,
        gamma_inhom_ghz,
        mean_rate_cps,
        repump_count,
        recovery_scans,
        n_fits: centers.len(),
    })
}

/// Output of a locked (or free-running) experiment.
#[derive(Debug, Clone)]
pub struct LockRun {
    pub records: Vec<ScanRecord>,
    pub fits: Vec<Option<PeakFit>>,
    /// `None` when fewer than two scans could be fitted.
    pub metrics: Option<LockMetrics>,
}

/// Runs `duration / period` complete scan cycles.
///
/// Each cycle: possible ionization, the forward ramp, then the back-scan
/// where the repump policy and (when enabled) the controller act. A scan that
/// is repumped never also adjusts the voltage. The diffusion stream is seeded
/// from `seed` rather than `diff.seed`, so one seed reproduces the whole run.
pub fn run_locked_experiment(
    scan: &ScanConfig,
    fb: &FeedbackConfig,
    diff: &DiffusionParams,
    tuning: &StarkTuning,
    duration: f64,
    seed: u64,
) -> Result<LockRun> {
    scan.validate()?;
    fb.validate(scan.n_bins)?;
    ensure_finite("duration", duration)?;
    if duration < scan.period {
        return Err(Error::InvalidArgument("duration shorter than one scan period".into()));
    }
    let n_scans = (duration / scan.period + 1e-9).floor() as usize;
    let process = DiffusionProcess::with_rng(*diff, rng_for_stream(seed, stream::DIFFUSION))?;
    let mut emitter = Emitter::new(process, *tuning);
    let mut photons = rng_for_stream(seed, stream::PHOTONS);
    let backscan = scan.period * (1.0 - scan.duty);

    let mut v_dc = fb.clamp(fb.v_dc_init);
    let mut records: Vec<ScanRecord> = Vec::with_capacity(n_scans);
    for i in 0..n_scans {
        emitter.state = emitter.process.maybe_ionize(emitter.state);
        let mut rec = run_scan(scan, &mut emitter, v_dc, i, &mut photons)?;
        let below = (rec.c_max as f64) < fb.threshold_t;
        let repump = match fb.repump_policy {
            RepumpPolicy::Threshold => below,
            RepumpPolicy::EveryScan => true,
            RepumpPolicy::Never => false,
        };
        let mut next_v = v_dc;
        if repump {
            rec.action = Action::Repump;
        } else if fb.enabled {
            records.push(rec);
            let (v, action) = controller_step(&records, fb, v_dc)?;
            rec = records.pop().expect("just pushed");
            // a controller repump request is dropped when the policy forbids repumps
            rec.action = if action == Action::Repump { Action::Hold } else { action };
            if action == Action::Adjust {
                next_v = v;
            }
        }
        if repump {
            emitter.state = emitter.process.apply_repump(emitter.state);
            rec.repump_applied = true;
        }
        emitter.evolve(backscan)?;
        records.push(rec);
        v_dc = next_v;
    }

    let fits = fit_scans(&records, fb.threshold_t);
    let metrics = compute_metrics(&records, &fits, scan, tuning, fb).ok();
    Ok(LockRun { records, fits, metrics })
}
