//! JSON configuration document.
//!
//! Sections: `finestructure`, `starkmap`, `instrument`, `diffusion`, `scan`,
//! `feedback` and `scenarios`. The shipped defaults live in
//! `config/default.json` at the workspace root and are embedded here.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diffusion::DiffusionParams;
use crate::error::{Error, Result};
use crate::feedback::FeedbackConfig;
use crate::levels::{Branch, FineStructureParams, StarkCoefficients, VoltageToFieldMap};
use crate::scan::{ScanConfig, StarkTuning};
use crate::spectra::InstrumentModel;

/// The default configuration document shipped with the workspace.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../../config/default.json");

/// Environment variable naming a config file to use when none is given.
pub const CONFIG_ENV_VAR: &str = "NVSTARK_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarkMapConfig {
    pub coefficients: StarkCoefficients,
    /// Field angle, degrees.
    pub theta_r: f64,
    /// Static field present at zero volts, (f_par, f_perp) GHz.
    #[serde(default)]
    pub static_offset: [f64; 2],
    /// Branch whose line is locked in the PLE simulations.
    pub lock_branch: Branch,
}

impl StarkMapConfig {
    pub fn voltage_map(&self) -> VoltageToFieldMap {
        let mut m = VoltageToFieldMap::for_va_on_v1_vref(self.coefficients, self.theta_r);
        m.static_offset = self.static_offset;
        m
    }

    pub fn lock_tuning(&self) -> StarkTuning {
        StarkTuning::for_branch(&self.coefficients, self.lock_branch, 0.0)
    }
}

/// Settings of the bundled CLI scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSettings {
    /// Tuning-voltage range of the level sweep, V.
    pub sweep_v_range: [f64; 2],
    pub sweep_points: usize,
    /// Voltages of the emission map frames, V.
    pub emission_v_range: [f64; 2],
    pub emission_frames: usize,
    /// Emission spectrum axis, GHz.
    pub emission_axis: [f64; 2],
    pub emission_bins: usize,
    pub gs_polarization: f64,
    /// Insert a dark frame every this many frames; 0 disables dark frames.
    pub dark_every: usize,
    /// DC voltages of the PLE map, V.
    pub ple_v_range: [f64; 2],
    pub ple_steps: usize,
    /// Transverse splittings of the θ_r fit dataset, GHz.
    pub theta_delta_range: [f64; 2],
    pub theta_points: usize,
    /// Angle used to synthesise the θ_r dataset, degrees.
    pub theta_true: f64,
    /// Relative noise of the θ_r dataset.
    pub theta_noise: f64,
    /// Default lock-run duration, s.
    pub lock_duration: f64,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        Self {
            sweep_v_range: [0.0, 20.0],
            sweep_points: 201,
            emission_v_range: [0.0, 20.0],
            emission_frames: 41,
            emission_axis: [-30.0, 30.0],
            emission_bins: 600,
            gs_polarization: 0.95,
            dark_every: 8,
            ple_v_range: [-10.0, 10.0],
            ple_steps: 41,
            theta_delta_range: [0.0, 20.0],
            theta_points: 41,
            theta_true: 15.0,
            theta_noise: 0.05,
            lock_duration: 280.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub finestructure: FineStructureParams,
    pub starkmap: StarkMapConfig,
    pub instrument: InstrumentModel,
    pub diffusion: DiffusionParams,
    pub scan: ScanConfig,
    pub feedback: FeedbackConfig,
    #[serde(default)]
    pub scenarios: ScenarioSettings,
}

fn section<T: serde::de::DeserializeOwned>(doc: &Value, key: &str) -> Result<T> {
    let v = doc.get(key).ok_or_else(|| Error::Config { key: key.into(), message: "missing section".into() })?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Config { key: key.into(), message: e.to_string() })
}

fn check(key: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| Error::Config { key: key.into(), message: e.to_string() })
}

impl Config {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(s).map_err(|e| Error::Config { key: "<document>".into(), message: e.to_string() })?;
        let obj = doc.as_object().ok_or_else(|| Error::Config { key: "<document>".into(), message: "expected an object".into() })?;
        const KNOWN: [&str; 7] = ["finestructure", "starkmap", "instrument", "diffusion", "scan", "feedback", "scenarios"];
        if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Config { key: k.clone(), message: "unknown section".into() });
        }
        let cfg = Config {
            finestructure: section(&doc, "finestructure")?,
            starkmap: section(&doc, "starkmap")?,
            instrument: section(&doc, "instrument")?,
            diffusion: section(&doc, "diffusion")?,
            scan: section(&doc, "scan")?,
            feedback: section(&doc, "feedback")?,
            scenarios: if doc.get("scenarios").is_some() { section(&doc, "scenarios")? } else { ScenarioSettings::default() },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// The embedded default document.
    pub fn shipped() -> Self {
        Self::from_json_str(DEFAULT_CONFIG_JSON).expect("shipped config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        check("finestructure", self.finestructure.validate())?;
        check("starkmap.coefficients", self.starkmap.coefficients.validate())?;
        check("starkmap", self.starkmap.voltage_map().validate())?;
        check("instrument", self.instrument.validate())?;
        check("diffusion", self.diffusion.validate())?;
        check("scan", self.scan.validate())?;
        check("feedback", self.feedback.validate(self.scan.n_bins))?;
        let s = &self.scenarios;
        if s.sweep_points < 2 || s.emission_frames < 1 || s.emission_bins < 2 || s.ple_steps < 1 || s.theta_points < 6 {
            return Err(Error::Config { key: "scenarios".into(), message: "point counts too small".into() });
        }
        if !(0.0..=1.0).contains(&s.gs_polarization) {
            return Err(Error::Config { key: "scenarios.gs_polarization".into(), message: "must be in [0, 1]".into() });
        }
        if !(s.lock_duration > 0.0) {
            return Err(Error::Config { key: "scenarios.lock_duration".into(), message: "must be > 0".into() });
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
