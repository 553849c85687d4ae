use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hamiltonian::{check_hermitian, Hamiltonian};
use crate::error::Result;

/// Orbital branch of an excited-state level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// The branch pushed up by the transverse field (ℰx).
    Upper,
    /// The branch pushed down (ℰy).
    Lower,
}

/// Conventional names of the six levels in descending energy at low field.
pub const LEVEL_NAMES: [&str; 6] = ["A2", "A1", "Ex", "Ey", "E1", "E2"];

/// Indices of the m_s = 0 components in the product basis.
pub const SPIN_ZERO_INDICES: [usize; 2] = [1, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct EsLevel {
    /// GHz relative to the zero-field centroid.
    pub energy: f64,
    pub amplitudes: [Complex64; 6],
    /// Spin-zero character P₀.
    pub p0: f64,
    /// Weight on the upper-branch orbital, in [0, 1].
    pub upper_weight: f64,
    pub branch: Branch,
}

impl EsLevel {
    fn new(energy: f64, amplitudes: [Complex64; 6], upper_orbital: &[Complex64; 2]) -> Self {
        let p0 = spin_zero_weight(&amplitudes);
        let upper_weight = orbital_weight(&amplitudes, upper_orbital);
        Self { energy, amplitudes, p0, upper_weight, branch: Branch::Upper }
    }

    pub fn overlap(&self, other: &EsLevel) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }
}

pub fn spin_zero_weight(amplitudes: &[Complex64; 6]) -> f64 {
    SPIN_ZERO_INDICES.iter().map(|&i| amplitudes[i].norm_sqr()).sum()
}

fn orbital_weight(amplitudes: &[Complex64; 6], orbital: &[Complex64; 2]) -> f64 {
    (0..3)
        .map(|s| (orbital[0].conj() * amplitudes[s] + orbital[1].conj() * amplitudes[3 + s]).norm_sqr())
        .sum()
}

/// Diagonalizes the Hamiltonian and returns the six levels sorted by energy,
/// highest first.
///
/// Levels with at least half their weight on the upper orbital are labelled
/// `Upper`. If that does not split the levels three and three (near zero
/// transverse field) the three highest levels are labelled `Upper`.
pub fn eigenlevels(h: &Hamiltonian) -> Result<[EsLevel; 6]> {
    check_hermitian(&h.matrix, 1e-9)?;
    // Symmetrize so tiny round-off asymmetry never leaks into the solver.
    let m = (h.matrix + h.matrix.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let levels: Vec<EsLevel> = order
        .iter()
        .map(|&k| {
            let col = eig.eigenvectors.column(k);
            let norm = col.norm();
            let mut amps = [Complex64::new(0.0, 0.0); 6];
            for (i, a) in amps.iter_mut().enumerate() {
                *a = col[i] / norm;
            }
            EsLevel::new(eig.eigenvalues[k], amps, &h.upper_orbital)
        })
        .collect();
    let mut levels: [EsLevel; 6] = levels.try_into().expect("six levels");

    let n_upper = levels.iter().filter(|l| l.upper_weight >= 0.5).count();
    let ambiguous = levels.iter().any(|l| (l.upper_weight - 0.5).abs() < 0.05);
    if n_upper == 3 && !ambiguous {
        for l in levels.iter_mut() {
            l.branch = if l.upper_weight >= 0.5 { Branch::Upper } else { Branch::Lower };
        }
    } else {
        for (i, l) in levels.iter_mut().enumerate() {
            l.branch = if i < 3 { Branch::Upper } else { Branch::Lower };
        }
    }
    Ok(levels)
}

/// Relabels the branches of a sweep of level sets by continuity: each level
/// inherits the branch of the level it overlaps most in the previous step.
/// The first step keeps its own labels.
pub fn track_branches(sweep: &mut [[EsLevel; 6]]) {
    for step in 1..sweep.len() {
        let (prev, rest) = sweep.split_at_mut(step);
        let prev = &prev[step - 1];
        let cur = &mut rest[0];
        let mut taken = [false; 6];
        let mut labels = [Branch::Upper; 6];
        for (i, level) in cur.iter().enumerate() {
            let best = (0..6)
                .filter(|&j| !taken[j])
                .max_by(|&a, &b| level.overlap(&prev[a]).total_cmp(&level.overlap(&prev[b])))
                .expect("unassigned level");
            taken[best] = true;
            labels[i] = prev[best].branch;
        }
        for (level, label) in cur.iter_mut().zip(labels) {
            level.branch = label;
        }
    }
}
