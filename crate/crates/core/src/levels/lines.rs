use serde::{Deserialize, Serialize};

use super::eigen::{eigenlevels, Branch, EsLevel, LEVEL_NAMES};
use super::hamiltonian::build_hamiltonian;
use super::params::{ElectricField, FineStructureParams};
use crate::error::{ensure_finite, Error, Result};

/// Ground-state sublevel reached by an emitted photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroundSublevel {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "pm1")]
    PlusMinusOne,
}

/// One zero-phonon emission line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionLine {
    /// Photon frequency offset, GHz.
    pub frequency: f64,
    /// Relative emission weight.
    pub intensity: f64,
    /// Index of the excited level, 0 = highest.
    pub upper_index: usize,
    pub upper_label: String,
    pub upper_branch: Branch,
    pub lower_label: GroundSublevel,
}

/// Relative excitation of the two orbital branches.
///
/// Equal weights correspond to an excitation polarization that drives both
/// branches. The weights are absolute, so lowering one of them lowers the
/// total emission rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchExcitation {
    pub upper: f64,
    pub lower: f64,
}

impl Default for BranchExcitation {
    fn default() -> Self {
        Self { upper: 1.0, lower: 1.0 }
    }
}

/// Emission lines from the six levels with equal branch excitation.
pub fn transition_lines(
    levels: &[EsLevel; 6],
    params: &FineStructureParams,
    gs_polarization: f64,
) -> Result<Vec<TransitionLine>> {
    transition_lines_with(levels, params, gs_polarization, BranchExcitation::default())
}

/// Emission lines from the six levels.
///
/// Each level is populated by spin-conserving excitation out of a ground state
/// with `P0 = gs_polarization` and the remainder split evenly over ±1; its
/// emission is then shared between |0⟩ (weight P₀) and |±1⟩ (weight 1 − P₀).
/// Lines to |±1⟩ sit `d_gs` below the corresponding |0⟩ line.
pub fn transition_lines_with(
    levels: &[EsLevel; 6],
    params: &FineStructureParams,
    gs_polarization: f64,
    excitation: BranchExcitation,
) -> Result<Vec<TransitionLine>> {
    ensure_finite("gs_polarization", gs_polarization)?;
    if !(0.0..=1.0).contains(&gs_polarization) {
        return Err(Error::InvalidArgument(format!("gs_polarization must be in [0, 1], got {gs_polarization}")));
    }
    if excitation.upper < 0.0 || excitation.lower < 0.0 {
        return Err(Error::InvalidArgument("branch excitation weights must be >= 0".into()));
    }
    let mut lines = Vec::with_capacity(12);
    for (i, level) in levels.iter().enumerate() {
        let branch_weight = excitation.upper * level.upper_weight + excitation.lower * (1.0 - level.upper_weight);
        let occupancy =
            branch_weight * (gs_polarization * level.p0 + 0.5 * (1.0 - gs_polarization) * (1.0 - level.p0));
        for (lower, weight, shift) in [
            (GroundSublevel::Zero, level.p0, 0.0),
            (GroundSublevel::PlusMinusOne, 1.0 - level.p0, params.d_gs),
        ] {
            lines.push(TransitionLine {
                frequency: level.energy - shift,
                intensity: (occupancy * weight).max(0.0),
                upper_index: i,
                upper_label: LEVEL_NAMES[i].to_string(),
                upper_branch: level.branch,
                lower_label: lower,
            });
        }
    }
    Ok(lines)
}

/// Whether the Λ fraction is divided by the total emission of the branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaNormalization {
    /// Σᵢ P₀ᵢ(1 − P₀ᵢ) as written.
    #[default]
    Bare,
    /// Σᵢ P₀ᵢ(1 − P₀ᵢ) / Σᵢ P₀ᵢ: the |±1⟩ share of all emission from the branch.
    BranchTotal,
}

/// Probability that emission from the lower branch returns to |±1⟩, assuming
/// excitation out of |0⟩ into one of the three lowest levels.
pub fn lambda_emission_fraction(
    params: &FineStructureParams,
    theta_r: f64,
    delta_perp: f64,
    normalization: LambdaNormalization,
) -> Result<f64> {
    ensure_finite("delta_perp", delta_perp)?;
    if delta_perp < 0.0 {
        return Err(Error::InvalidArgument("delta_perp must be >= 0".into()));
    }
    let field = ElectricField::new(0.0, delta_perp, theta_r)?;
    let levels = eigenlevels(&build_hamiltonian(params, &field)?)?;
    Ok(lambda_fraction_of_levels(&levels, normalization))
}

fn lambda_fraction_of_levels(levels: &[EsLevel; 6], normalization: LambdaNormalization) -> f64 {
    let lower = &levels[3..];
    let bare: f64 = lower.iter().map(|l| l.p0 * (1.0 - l.p0)).sum();
    match normalization {
        LambdaNormalization::Bare => bare,
        LambdaNormalization::BranchTotal => {
            let total: f64 = lower.iter().map(|l| l.p0).sum();
            if total > 0.0 {
                bare / total
            } else {
                0.0
            }
        }
    }
}

/// One row of a level sweep: tuning voltage, six energies and six P₀ values.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSweepRow {
    pub v_a: f64,
    pub energies: [f64; 6],
    pub p0: [f64; 6],
}

/// Levels along a voltage sweep for a fixed voltage-to-field map acting on V_a.
pub fn level_sweep(
    params: &FineStructureParams,
    map: &super::params::VoltageToFieldMap,
    voltages: &[f64],
) -> Result<Vec<LevelSweepRow>> {
    voltages
        .iter()
        .map(|&v| {
            let field = super::params::voltage_to_field(map, v, 0.0, v)?;
            let levels = eigenlevels(&build_hamiltonian(params, &field)?)?;
            Ok(LevelSweepRow {
                v_a: v,
                energies: std::array::from_fn(|i| levels[i].energy),
                p0: std::array::from_fn(|i| levels[i].p0),
            })
        })
        .collect()
}
