//! PLE scan engine: one ramp cycle against the hidden emitter state.
//!
//! In laser mode the excitation frequency is ramped across `span` GHz around
//! `center`. In voltage mode the laser sits at `center` and the tuning
//! voltage is ramped across `span` volts peak-to-peak around `v_dc`, so the
//! emitter is tuned through the laser instead. In both modes the first
//! `duty·period` seconds form the forward ramp, split evenly into `n_bins`
//! bins, and the rest of the cycle is the back-scan.

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionProcess, DiffusionState};
use crate::error::{ensure_finite, Error, Result};
use crate::feedback::Action;
use crate::levels::{Branch, StarkCoefficients};
use crate::rng::{poisson, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    Laser,
    Voltage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub mode: ScanMode,
    /// GHz in laser mode, volts peak-to-peak in voltage mode.
    pub span: f64,
    /// Full cycle length, s.
    pub period: f64,
    /// Forward-ramp fraction of the cycle.
    pub duty: f64,
    pub n_bins: usize,
    /// Single-scan linewidth Γ_ss, MHz.
    pub homogeneous_fwhm_mhz: f64,
    /// Count rate on resonance, cts/s.
    pub peak_rate: f64,
    /// Background count rate, cts/s.
    pub background_rate: f64,
    /// Laser-scan center (laser mode) or fixed laser frequency (voltage mode), GHz.
    #[serde(default)]
    pub center: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            mode: ScanMode::Laser,
            span: 0.6,
            period: 1.0,
            duty: 0.9,
            n_bins: 50,
            homogeneous_fwhm_mhz: 60.0,
            peak_rate: 2000.0,
            background_rate: 50.0,
            center: 0.0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("span", self.span),
            ("period", self.period),
            ("duty", self.duty),
            ("homogeneous_fwhm_mhz", self.homogeneous_fwhm_mhz),
            ("peak_rate", self.peak_rate),
            ("background_rate", self.background_rate),
            ("center", self.center),
        ] {
            ensure_finite(k, v)?;
        }
        if self.span <= 0.0 {
            return Err(Error::InvalidArgument("span must be > 0".into()));
        }
        if self.period <= 0.0 {
            return Err(Error::InvalidArgument("period must be > 0".into()));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::InvalidArgument("duty must be in (0, 1)".into()));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidArgument("n_bins must be >= 2".into()));
        }
        if self.homogeneous_fwhm_mhz <= 0.0 {
            return Err(Error::InvalidArgument("homogeneous_fwhm_mhz must be > 0".into()));
        }
        if self.peak_rate < 0.0 || self.background_rate < 0.0 {
            return Err(Error::InvalidArgument("rates must be >= 0".into()));
        }
        Ok(())
    }

    /// Time spent in each bin, s.
    pub fn dwell(&self) -> f64 {
        self.period * self.duty / self.n_bins as f64
    }

    /// Ramp coordinate at the center of bin `k`, relative to the ramp midpoint.
    pub fn ramp_offset(&self, k: usize) -> f64 {
        -0.5 * self.span + (k as f64 + 0.5) * self.span / self.n_bins as f64
    }

    /// Bin centers in the ramp's own unit (GHz or V).
    pub fn bin_axis(&self, v_dc: f64) -> Vec<f64> {
        (0..self.n_bins)
            .map(|k| match self.mode {
                ScanMode::Laser => self.center + self.ramp_offset(k),
                ScanMode::Voltage => v_dc + self.ramp_offset(k),
            })
            .collect()
    }

    pub fn center_bin(&self) -> usize {
        self.n_bins / 2
    }
}

/// Interval `[start, end)` within a cycle reserved for feedback and repump.
pub fn backscan_window(cfg: &ScanConfig) -> (f64, f64) {
    (cfg.duty * cfg.period, cfg.period)
}

/// Static tuning of the emitter's transition with the DC voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkTuning {
    /// dν/dV, GHz/V.
    pub ghz_per_volt: f64,
    /// Transition frequency at zero volts and zero drift, GHz.
    #[serde(default)]
    pub offset_ghz: f64,
}

impl StarkTuning {
    /// Tuning of one orbital branch under the given coefficients.
    pub fn for_branch(coeffs: &StarkCoefficients, branch: Branch, offset_ghz: f64) -> Self {
        Self { ghz_per_volt: coeffs.branch_slope(branch), offset_ghz }
    }

    /// Transition frequency, GHz.
    pub fn resonance(&self, state: &DiffusionState, v: f64) -> f64 {
        self.offset_ghz + self.ghz_per_volt * v + state.detuning_offset * 1e-3
    }
}

/// Scan bins the peak moves per volt of DC offset. Negative in voltage mode,
/// where raising `v_dc` pulls the resonance earlier in the ramp.
pub fn bins_per_volt(cfg: &ScanConfig, tuning: &StarkTuning) -> f64 {
    let n = cfg.n_bins as f64;
    match cfg.mode {
        ScanMode::Laser => tuning.ghz_per_volt * n / cfg.span,
        ScanMode::Voltage => -n / cfg.span,
    }
}

/// One emitter: hidden state, its noise process and its Stark tuning.
#[derive(Debug, Clone)]
pub struct Emitter {
    pub state: DiffusionState,
    pub process: DiffusionProcess,
    pub tuning: StarkTuning,
}

impl Emitter {
    pub fn new(process: DiffusionProcess, tuning: StarkTuning) -> Self {
        Self { state: DiffusionState::default(), process, tuning }
    }

    pub fn evolve(&mut self, dt: f64) -> Result<()> {
        self.state = self.process.evolve(self.state, dt)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub index: usize,
    pub bin_counts: Vec<u64>,
    /// Bin centers, GHz (laser mode) or V (voltage mode).
    pub bin_axis: Vec<f64>,
    pub c_max: u64,
    pub b_max: usize,
    pub repump_applied: bool,
    pub action: Action,
    /// DC voltage during the forward ramp.
    pub v_dc: f64,
    /// Start of the cycle, s.
    pub timestamp: f64,
    /// Hidden detuning offset at mid-ramp, MHz. Diagnostic only.
    pub true_offset_mhz: f64,
}

/// Maximum count and its first-occurrence index.
pub fn argmax_first(counts: &[u64]) -> (usize, u64) {
    let mut best = (0, counts.first().copied().unwrap_or(0));
    for (i, &c) in counts.iter().enumerate() {
        if c > best.1 {
            best = (i, c);
        }
    }
    best
}

/// Normalized Lorentzian of unit height.
pub fn lorentzian(detuning_ghz: f64, fwhm_ghz: f64) -> f64 {
    let u = 2.0 * detuning_ghz / fwhm_ghz;
    1.0 / (1.0 + u * u)
}

/// Excitation minus transition frequency in bin `k`, GHz.
fn bin_detuning(cfg: &ScanConfig, tuning: &StarkTuning, state: &DiffusionState, v_dc: f64, k: usize) -> f64 {
    match cfg.mode {
        ScanMode::Laser => cfg.center + cfg.ramp_offset(k) - tuning.resonance(state, v_dc),
        ScanMode::Voltage => cfg.center - tuning.resonance(state, v_dc + cfg.ramp_offset(k)),
    }
}

/// Count rate at a given laser-emitter detuning, cts/s.
pub fn count_rate(cfg: &ScanConfig, detuning_ghz: f64, bright: bool) -> f64 {
    let signal = if bright { cfg.peak_rate * lorentzian(detuning_ghz, cfg.homogeneous_fwhm_mhz * 1e-3) } else { 0.0 };
    cfg.background_rate + signal
}

/// Expected counts per bin for a frozen emitter state.
pub fn expected_bin_counts(cfg: &ScanConfig, tuning: &StarkTuning, state: &DiffusionState, v_dc: f64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let dwell = cfg.dwell();
    Ok((0..cfg.n_bins)
        .map(|k| count_rate(cfg, bin_detuning(cfg, tuning, state, v_dc, k), state.charge_bright) * dwell)
        .collect())
}

/// Runs the forward ramp of one cycle starting at the emitter's current time.
///
/// The emitter evolves half a dwell before the first bin, one dwell between
/// bins and half a dwell after the last, so it leaves the ramp at
/// `duty·period` into the cycle. The returned record has `action = Hold`
/// and no repump; the caller fills those in during the back-scan.
pub fn run_scan(cfg: &ScanConfig, emitter: &mut Emitter, v_dc: f64, index: usize, photons: &mut SimRng) -> Result<ScanRecord> {
    cfg.validate()?;
    ensure_finite("v_dc", v_dc)?;
    let dwell = cfg.dwell();
    let timestamp = emitter.state.time;
    let mut counts = Vec::with_capacity(cfg.n_bins);
    let mut mid_offset = emitter.state.detuning_offset;
    for k in 0..cfg.n_bins {
        emitter.evolve(if k == 0 { 0.5 * dwell } else { dwell })?;
        if k == cfg.n_bins / 2 {
            mid_offset = emitter.state.detuning_offset;
        }
        let det = bin_detuning(cfg, &emitter.tuning, &emitter.state, v_dc, k);
        counts.push(poisson(photons, count_rate(cfg, det, emitter.state.charge_bright) * dwell));
    }
    emitter.evolve(0.5 * dwell)?;
    let (b_max, c_max) = argmax_first(&counts);
    Ok(ScanRecord {
        index,
        bin_axis: cfg.bin_axis(v_dc),
        bin_counts: counts,
        c_max,
        b_max,
        repump_applied: false,
        action: Action::Hold,
        v_dc,
        timestamp,
        true_offset_mhz: mid_offset,
    })
}
