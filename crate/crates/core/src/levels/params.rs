use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Spin-orbit and spin-spin parameters of the excited-state triplet, plus the
/// ground-state zero-field splitting and natural linewidth.
///
/// Energies are in GHz except `gamma_nat_mhz`. The shipped defaults place the
/// lower-branch spin anticrossings near a transverse splitting of 7 and 15 GHz
/// at a field angle of 15 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineStructureParams {
    /// Axial spin-orbit splitting.
    pub lambda_z: f64,
    /// Axial spin-spin parameter (m_s = 0 vs m_s = ±1 spacing).
    pub d_es_par: f64,
    /// Transverse spin-spin parameter; A1/A2 splitting equals `2 * d_es_perp`.
    pub d_es_perp: f64,
    /// Spin-spin term coupling m_s = 0 to m_s = ±1 across orbitals.
    #[serde(default = "default_d_es_mix")]
    pub d_es_mix: f64,
    /// Ground-state zero-field splitting.
    #[serde(default = "default_d_gs")]
    pub d_gs: f64,
    /// Natural linewidth, MHz.
    #[serde(default = "default_gamma_nat")]
    pub gamma_nat_mhz: f64,
}

fn default_d_es_mix() -> f64 {
    0.2
}
fn default_d_gs() -> f64 {
    2.88
}
fn default_gamma_nat() -> f64 {
    13.0
}

impl Default for FineStructureParams {
    fn default() -> Self {
        Self {
            lambda_z: 5.0,
            d_es_par: 1.35,
            d_es_perp: 1.55,
            d_es_mix: default_d_es_mix(),
            d_gs: default_d_gs(),
            gamma_nat_mhz: default_gamma_nat(),
        }
    }
}

impl FineStructureParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_z", self.lambda_z),
            ("d_es_par", self.d_es_par),
            ("d_es_perp", self.d_es_perp),
            ("d_es_mix", self.d_es_mix),
            ("d_gs", self.d_gs),
            ("gamma_nat_mhz", self.gamma_nat_mhz),
        ] {
            ensure_finite(name, v)?;
        }
        for (name, v) in [
            ("lambda_z", self.lambda_z),
            ("d_es_par", self.d_es_par),
            ("d_es_perp", self.d_es_perp),
            ("d_es_mix", self.d_es_mix),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.d_gs <= 0.0 {
            return Err(Error::InvalidArgument("d_gs must be > 0".into()));
        }
        if self.gamma_nat_mhz <= 0.0 {
            return Err(Error::InvalidArgument("gamma_nat_mhz must be > 0".into()));
        }
        Ok(())
    }
}

/// Effective electric field acting on the excited state, pre-multiplied by the
/// dipole moments so both components are energies in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectricField {
    /// Longitudinal shift Δd∥·F∥, GHz.
    pub f_par: f64,
    /// Transverse splitting δ⊥ = d⊥·F⊥, GHz. Always >= 0.
    pub f_perp: f64,
    /// Transverse-field angle from a reflection plane, degrees, in [0, 60].
    pub theta_r: f64,
}

impl ElectricField {
    /// Builds a field, folding a negative transverse component and arbitrary
    /// angle into the canonical domain. A sign flip of `f_perp` is the same as
    /// rotating the field by 60 degrees.
    pub fn new(f_par: f64, f_perp: f64, theta_r: f64) -> Result<Self> {
        ensure_finite("f_par", f_par)?;
        ensure_finite("f_perp", f_perp)?;
        ensure_finite("theta_r", theta_r)?;
        let (f_perp, theta) = if f_perp < 0.0 { (-f_perp, theta_r + 60.0) } else { (f_perp, theta_r) };
        Ok(Self { f_par, f_perp, theta_r: normalize_theta(theta) })
    }

    pub fn zero() -> Self {
        Self { f_par: 0.0, f_perp: 0.0, theta_r: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("f_par", self.f_par)?;
        ensure_finite("f_perp", self.f_perp)?;
        ensure_finite("theta_r", self.theta_r)?;
        if self.f_perp < 0.0 {
            return Err(Error::InvalidArgument("f_perp must be >= 0".into()));
        }
        Ok(())
    }
}

/// Folds an angle into [0, 60] using the 120-degree rotation symmetry and the
/// reflection planes at 0 and 60 degrees.
pub fn normalize_theta(theta_deg: f64) -> f64 {
    let t = theta_deg.rem_euclid(120.0);
    if t > 60.0 {
        120.0 - t
    } else {
        t
    }
}

/// Voltage-referred Stark tuning coefficients, GHz/V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkCoefficients {
    pub dd_par_per_volt: f64,
    pub d_perp_per_volt: f64,
}

impl StarkCoefficients {
    pub fn new(dd_par_per_volt: f64, d_perp_per_volt: f64) -> Result<Self> {
        let c = Self { dd_par_per_volt, d_perp_per_volt };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("dd_par_per_volt", self.dd_par_per_volt)?;
        ensure_finite("d_perp_per_volt", self.d_perp_per_volt)?;
        if self.d_perp_per_volt < 0.0 {
            return Err(Error::InvalidArgument("d_perp_per_volt must be >= 0".into()));
        }
        Ok(())
    }

    /// Tuning slope of one orbital branch, GHz/V.
    pub fn branch_slope(&self, branch: super::Branch) -> f64 {
        match branch {
            super::Branch::Upper => self.dd_par_per_volt + self.d_perp_per_volt,
            super::Branch::Lower => self.dd_par_per_volt - self.d_perp_per_volt,
        }
    }

    /// Converts to dipole moments in GHz/(MV/m), given the field produced per
    /// applied volt (longitudinal, transverse) in MV/m/V.
    pub fn to_dipole_moments(&self, field_per_volt: (f64, f64)) -> Result<(f64, f64)> {
        let (par, perp) = field_per_volt;
        if par == 0.0 || perp == 0.0 {
            return Err(Error::InvalidArgument("field per volt must be nonzero".into()));
        }
        Ok((self.dd_par_per_volt / par, self.d_perp_per_volt / perp))
    }
}

/// Linear map from electrode voltages (V1, V2, Vref) to the effective field.
///
/// Each column holds the (Δd∥F∥, d⊥F⊥) response in GHz per volt on that
/// electrode. The transverse response is signed; negative values flip the
/// field through `ElectricField::new`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageToFieldMap {
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    pub vref: [f64; 2],
    pub theta_r: f64,
    #[serde(default)]
    pub static_offset: [f64; 2],
}

impl VoltageToFieldMap {
    /// Map for a configuration where the tuning voltage V_a is applied to V1
    /// and Vref together. The response is split 0.9 : 1.1 between the two
    /// electrodes, following their relative field strength at the emitter.
    pub fn for_va_on_v1_vref(coeffs: StarkCoefficients, theta_r: f64) -> Self {
        let w1 = 0.9 / 2.0;
        let wr = 1.1 / 2.0;
        let c = [coeffs.dd_par_per_volt, coeffs.d_perp_per_volt];
        Self {
            v1: [c[0] * w1, c[1] * w1],
            v2: [0.0, 0.0],
            vref: [c[0] * wr, c[1] * wr],
            theta_r,
            static_offset: [0.0, 0.0],
        }
    }

    /// Signed (f_par, f_perp) before folding into an `ElectricField`.
    pub fn apply(&self, v1: f64, v2: f64, vref: f64) -> [f64; 2] {
        let mut out = self.static_offset;
        for k in 0..2 {
            out[k] += self.v1[k] * v1 + self.v2[k] * v2 + self.vref[k] * vref;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.v1.iter().chain(&self.v2).chain(&self.vref).chain(&self.static_offset) {
            ensure_finite("voltage map coefficient", *v)?;
        }
        ensure_finite("theta_r", self.theta_r)
    }
}

/// Effective field produced by the given electrode voltages.
pub fn voltage_to_field(map: &VoltageToFieldMap, v1: f64, v2: f64, vref: f64) -> Result<ElectricField> {
    map.validate()?;
    let [f_par, f_perp] = map.apply(v1, v2, vref);
    ElectricField::new(f_par, f_perp, map.theta_r)
}

/// Branch shifts (Δ_Ex, Δ_Ey) in GHz for a tuning voltage `v_a`.
pub fn orbital_shifts(coeffs: &StarkCoefficients, v_a: f64) -> Result<(f64, f64)> {
    coeffs.validate()?;
    ensure_finite("v_a", v_a)?;
    let par = coeffs.dd_par_per_volt * v_a;
    let perp = coeffs.d_perp_per_volt * v_a;
    Ok((par + perp, par - perp))
}
