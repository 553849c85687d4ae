//! Excited-state level structure under applied electric fields.

mod eigen;
mod hamiltonian;
mod lines;
mod params;

pub use eigen::{eigenlevels, spin_zero_weight, track_branches, Branch, EsLevel, LEVEL_NAMES, SPIN_ZERO_INDICES};
pub use hamiltonian::{
    build_hamiltonian, fine_structure_matrix, hermiticity_error, stark_matrix, upper_orbital, CMatrix6, Hamiltonian,
};
pub use lines::{
    lambda_emission_fraction, level_sweep, transition_lines, transition_lines_with, BranchExcitation, GroundSublevel,
    LambdaNormalization, LevelSweepRow, TransitionLine,
};
pub use params::{
    normalize_theta, orbital_shifts, voltage_to_field, ElectricField, FineStructureParams, StarkCoefficients,
    VoltageToFieldMap,
};
