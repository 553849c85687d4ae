//! Six-level excited-state Hamiltonian.
//!
//! Basis ordering is the product {X, Y} ⊗ {+1, 0, −1}: index = 3·orbital + spin,
//! so the m_s = 0 components sit at indices 1 and 4. All energies are GHz.
//!
//! Terms, with σ the orbital Pauli matrices on {X, Y} and S the spin-1 operators:
//!
//! - spin-orbit: `−λz · σy ⊗ Sz`
//! - axial spin-spin: `D∥ · 1 ⊗ (Sz² − 2/3)`
//! - transverse spin-spin: `(D⊥/2) · [σz ⊗ (Sy² − Sx²) − σx ⊗ {Sx, Sy}]`
//! - spin-spin mixing: `Dmix · [σz ⊗ {Sx, Sz} − σx ⊗ {Sy, Sz}]`
//! - Stark: `f∥ · 1 + f⊥ · (cos θ σz − sin θ σx) ⊗ 1`
//!
//! At zero field this orders the levels A2, A1, Ex, Ey, E1, E2 from the top.
//! The spectrum is invariant under θ → θ + 120° and θ → −θ, and θ → θ + 60°
//! is equivalent to reversing the transverse field.

use nalgebra::{Matrix2, Matrix3, Matrix6};
use num_complex::Complex64;

use super::params::{ElectricField, FineStructureParams};
use crate::error::{Error, Result};

pub type CMatrix6 = Matrix6<Complex64>;

/// A Hermitian 6×6 excited-state Hamiltonian together with the orbital state
/// that the transverse field pushes up in energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    pub matrix: CMatrix6,
    /// Upper-branch orbital in the {X, Y} basis.
    pub upper_orbital: [Complex64; 2],
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn spin_ops() -> (Matrix3<Complex64>, Matrix3<Complex64>, Matrix3<Complex64>) {
    let s2 = std::f64::consts::SQRT_2;
    let z = Complex64::new(0.0, 0.0);
    let sz = Matrix3::from_diagonal(&nalgebra::Vector3::new(c(1.0), z, c(-1.0)));
    let sp = Matrix3::new(z, c(s2), z, z, z, c(s2), z, z, z);
    let sm = sp.adjoint();
    let sx = (sp + sm) * c(0.5);
    let sy = (sp - sm) * Complex64::new(0.0, -0.5);
    (sx, sy, sz)
}

fn pauli() -> (Matrix2<Complex64>, Matrix2<Complex64>, Matrix2<Complex64>) {
    let z = Complex64::new(0.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let sx = Matrix2::new(z, c(1.0), c(1.0), z);
    let sy = Matrix2::new(z, -i, i, z);
    let sz = Matrix2::new(c(1.0), z, z, c(-1.0));
    (sx, sy, sz)
}

fn kron(a: &Matrix2<Complex64>, b: &Matrix3<Complex64>) -> CMatrix6 {
    let mut out = CMatrix6::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..3 {
                for l in 0..3 {
                    out[(3 * i + k, 3 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

fn anti(a: &Matrix3<Complex64>, b: &Matrix3<Complex64>) -> Matrix3<Complex64> {
    a * b + b * a
}

/// Zero-field fine structure: spin-orbit plus spin-spin terms.
pub fn fine_structure_matrix(params: &FineStructureParams) -> CMatrix6 {
    let (sx, sy, sz) = spin_ops();
    let (px, py, pz) = pauli();
    let id2 = Matrix2::identity();
    let id3 = Matrix3::<Complex64>::identity();

    let so = kron(&py, &sz) * c(-params.lambda_z);
    let ss_par = kron(&id2, &(sz * sz - id3 * c(2.0 / 3.0))) * c(params.d_es_par);
    let ss_perp = (kron(&pz, &(sy * sy - sx * sx)) - kron(&px, &anti(&sx, &sy))) * c(0.5 * params.d_es_perp);
    let ss_mix = (kron(&pz, &anti(&sx, &sz)) - kron(&px, &anti(&sy, &sz))) * c(params.d_es_mix);
    so + ss_par + ss_perp + ss_mix
}

/// Orbital Stark operator for a transverse field at an arbitrary angle, without
/// folding. `f_perp` may be negative here.
pub fn stark_matrix(f_par: f64, f_perp: f64, theta_deg: f64) -> CMatrix6 {
    let (px, _, pz) = pauli();
    let id3 = Matrix3::<Complex64>::identity();
    let t = theta_deg.to_radians();
    let orb = pz * c(t.cos()) - px * c(t.sin());
    CMatrix6::identity() * c(f_par) + kron(&orb, &id3) * c(f_perp)
}

/// Upper eigenvector of `cos θ σz − sin θ σx`.
pub fn upper_orbital(theta_deg: f64) -> [Complex64; 2] {
    let half = theta_deg.to_radians() / 2.0;
    [c(half.cos()), c(-half.sin())]
}

/// Builds the excited-state Hamiltonian for the given parameters and field.
pub fn build_hamiltonian(params: &FineStructureParams, field: &ElectricField) -> Result<Hamiltonian> {
    params.validate()?;
    field.validate()?;
    let matrix = fine_structure_matrix(params) + stark_matrix(field.f_par, field.f_perp, field.theta_r);
    Ok(Hamiltonian { matrix, upper_orbital: upper_orbital(field.theta_r) })
}

/// Relative anti-Hermitian part, ‖H − H†‖ / ‖H‖ (Frobenius).
pub fn hermiticity_error(m: &CMatrix6) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / norm
}

pub(crate) fn check_hermitian(m: &CMatrix6, tol: f64) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::ContractViolation("Hamiltonian has non-finite entries".into()));
    }
    let err = hermiticity_error(m);
    if err > tol {
        return Err(Error::ContractViolation(format!("matrix is not Hermitian (relative error {err:.3e})")));
    }
    Ok(())
}
