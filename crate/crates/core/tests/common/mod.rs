//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use starklock_core::levels::{build_hamiltonian, ElectricField, FineStructureParams};

/// Cyclic Jacobi diagonalization of a real symmetric matrix stored row-major.
/// Returns eigenvalues and eigenvectors (as columns of `v`, row-major).
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].powi(2)).sum();
        if off.sqrt() < 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Eigenvalues (ascending) and spin-zero weights of a 6×6 complex Hermitian
/// matrix, via the 12×12 real embedding `[[Re, −Im], [Im, Re]]`. Every
/// eigenvalue appears twice in the embedding; each pair is averaged.
pub fn oracle_levels(h: &[[(f64, f64); 6]; 6]) -> Vec<(f64, f64)> {
    let n = 12;
    let mut m = vec![0.0; n * n];
    for i in 0..6 {
        for j in 0..6 {
            let (re, im) = h[i][j];
            m[i * n + j] = re;
            m[(i + 6) * n + (j + 6)] = re;
            m[i * n + (j + 6)] = -im;
            m[(i + 6) * n + j] = im;
        }
    }
    let (vals, vecs) = jacobi_eigen(&m, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let spin0 = |k: usize| -> f64 {
        [1usize, 4].iter().map(|&i| vecs[i * n + k].powi(2) + vecs[(i + 6) * n + k].powi(2)).sum()
    };
    order
        .chunks(2)
        .map(|pair| {
            let e = 0.5 * (vals[pair[0]] + vals[pair[1]]);
            let p0 = 0.5 * (spin0(pair[0]) + spin0(pair[1]));
            (e, p0)
        })
        .collect()
}

pub fn hamiltonian_entries(params: &FineStructureParams, field: &ElectricField) -> [[(f64, f64); 6]; 6] {
    let h = build_hamiltonian(params, field).unwrap();
    let mut out = [[(0.0, 0.0); 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            let z = h.matrix[(i, j)];
            out[i][j] = (z.re, z.im);
        }
    }
    out
}

/// Σ P0(1 − P0) over the three lowest levels, by brute force.
pub fn oracle_lambda_fraction(params: &FineStructureParams, theta: f64, delta_perp: f64) -> f64 {
    let field = ElectricField::new(0.0, delta_perp, theta).unwrap();
    let levels = oracle_levels(&hamiltonian_entries(params, &field));
    levels[..3].iter().map(|(_, p)| p * (1.0 - p)).sum()
}

/// Local maxima of a sampled curve, as x positions.
pub fn local_maxima(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    (1..ys.len() - 1).filter(|&i| ys[i] > ys[i - 1] && ys[i] >= ys[i + 1]).map(|i| xs[i]).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Synthetic Stark line positions: two families per branch, `n_volts`
/// voltages from 0 to 19 V, Gaussian position noise in GHz.
pub fn stark_dataset(dd: f64, dp: f64, n_volts: usize, noise_ghz: f64, seed: u64) -> Vec<starklock_core::fitting::StarkPoint> {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    use starklock_core::levels::Branch;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise = rand_distr::Normal::new(0.0, noise_ghz.max(1e-300)).unwrap();
    let families = [("Ex0", Branch::Upper, 5.0), ("Ex1", Branch::Upper, 2.12), ("Ey0", Branch::Lower, -5.0), ("Ey1", Branch::Lower, -7.88)];
    let mut out = Vec::new();
    for k in 0..n_volts {
        let v = 19.0 * k as f64 / (n_volts - 1) as f64;
        for (name, branch, off) in families {
            let sign = if branch == Branch::Upper { 1.0 } else { -1.0 };
            let eps = if noise_ghz > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            out.push(starklock_core::fitting::StarkPoint {
                v_a: v,
                frequency: off + (dd + sign * dp) * v + eps,
                family: name.to_string(),
                branch,
            });
        }
    }
    out
}
