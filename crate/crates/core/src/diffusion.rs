//! Hidden emitter state: slow spectral drift, repump-induced jumps and
//! photoionization.
//!
//! Drift is a mean-reverting Gaussian process, sampled exactly over any step:
//! `x ← x·e^{−κdt} + σ·√((1 − e^{−2κdt}) / 2κ)·ξ`, which reduces to a random
//! walk `x ← x + σ√dt·ξ` when the reversion rate κ is zero.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::{gaussian, rng_from_seed, SimRng};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionParams {
    /// Random-walk rate of the slow drift, MHz/√s.
    pub drift_sigma: f64,
    /// Standard deviation of the jump that accompanies a repump, MHz.
    pub jump_sigma: f64,
    /// Mean-reversion rate, 1/s. Zero gives a pure random walk.
    #[serde(default)]
    pub reversion_rate: f64,
    /// Probability that the emitter ionizes during one scan.
    #[serde(default)]
    pub ionization_prob_per_scan: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self { drift_sigma: 0.0, jump_sigma: 0.0, reversion_rate: 0.0, ionization_prob_per_scan: 0.0, seed: 0 }
    }
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("drift_sigma", self.drift_sigma),
            ("jump_sigma", self.jump_sigma),
            ("reversion_rate", self.reversion_rate),
            ("ionization_prob_per_scan", self.ionization_prob_per_scan),
        ] {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.ionization_prob_per_scan > 1.0 {
            return Err(Error::InvalidArgument("ionization_prob_per_scan must be <= 1".into()));
        }
        Ok(())
    }

    /// Stationary standard deviation of the drift, MHz; infinite for a random walk.
    pub fn stationary_sigma(&self) -> f64 {
        if self.reversion_rate > 0.0 {
            self.drift_sigma / (2.0 * self.reversion_rate).sqrt()
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionState {
    /// Offset of the transition from its nominal frequency, MHz.
    pub detuning_offset: f64,
    /// True while the emitter is in the bright (negative) charge state.
    pub charge_bright: bool,
    /// Seconds.
    pub time: f64,
}

impl Default for DiffusionState {
    fn default() -> Self {
        Self { detuning_offset: 0.0, charge_bright: true, time: 0.0 }
    }
}

/// Drives one trajectory of the hidden state from a single random stream.
#[derive(Debug, Clone)]
pub struct DiffusionProcess {
    params: DiffusionParams,
    rng: SimRng,
}

impl DiffusionProcess {
    /// Process seeded from `params.seed`.
    pub fn new(params: DiffusionParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, rng: rng_from_seed(params.seed) })
    }

    /// Process driven by an externally supplied stream.
    pub fn with_rng(params: DiffusionParams, rng: SimRng) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, rng })
    }

    pub fn params(&self) -> &DiffusionParams {
        &self.params
    }

    /// Advances the drift by `dt` seconds. Charge state is untouched.
    pub fn evolve(&mut self, state: DiffusionState, dt: f64) -> Result<DiffusionState> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let p = &self.params;
        let mut next = state;
        next.time = state.time + dt;
        if p.drift_sigma == 0.0 {
            if p.reversion_rate > 0.0 {
                next.detuning_offset = state.detuning_offset * (-p.reversion_rate * dt).exp();
            }
            return Ok(next);
        }
        let xi = gaussian(&mut self.rng);
        next.detuning_offset = if p.reversion_rate > 0.0 {
            let decay = (-p.reversion_rate * dt).exp();
            let std = p.drift_sigma * ((1.0 - decay * decay) / (2.0 * p.reversion_rate)).sqrt();
            state.detuning_offset * decay + std * xi
        } else {
            state.detuning_offset + p.drift_sigma * dt.sqrt() * xi
        };
        Ok(next)
    }

    /// Restores the bright charge state and applies a Gaussian spectral jump.
    pub fn apply_repump(&mut self, state: DiffusionState) -> DiffusionState {
        let mut next = state;
        next.charge_bright = true;
        if self.params.jump_sigma > 0.0 {
            next.detuning_offset += self.params.jump_sigma * gaussian(&mut self.rng);
        }
        next
    }

    /// Ionizes the emitter with the per-scan probability. Never brightens it.
    pub fn maybe_ionize(&mut self, state: DiffusionState) -> DiffusionState {
        let mut next = state;
        let p = self.params.ionization_prob_per_scan;
        if p > 0.0 && self.rng.random::<f64>() < p {
            next.charge_bright = false;
        }
        next
    }
}
