//! Global fits of line positions against tuning voltage.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{invert_spd, minimize, LeastSquaresProblem, LmOptions};
use crate::error::{ensure_finite, Error, Result};
use crate::levels::{
    build_hamiltonian, eigenlevels, Branch, ElectricField, FineStructureParams, GroundSublevel,
};

/// A value with its one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Self { value, std_error }
    }
}

/// One observed line position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarkPoint {
    pub v_a: f64,
    /// GHz.
    pub frequency: f64,
    /// Line family name; points of one family share a zero-field offset.
    pub family: String,
    /// Orbital branch the family belongs to.
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarkFitResult {
    pub dd_par_per_volt: Estimate,
    pub d_perp_per_volt: Estimate,
    /// Only set by fits that constrain the field angle.
    pub theta_r: Option<Estimate>,
    pub zero_field_offsets: BTreeMap<String, Estimate>,
    pub residual_rms: f64,
}

const COEFF_NAMES: [&str; 2] = ["dd_par_per_volt", "d_perp_per_volt"];

fn validate_points(data: &[StarkPoint]) -> Result<Vec<String>> {
    for p in data {
        ensure_finite("v_a", p.v_a)?;
        ensure_finite("frequency", p.frequency)?;
    }
    let families: Vec<String> = data
        .iter()
        .map(|p| p.family.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if families.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 line families, got {}", families.len())));
    }
    let mut volts: Vec<f64> = data.iter().map(|p| p.v_a).collect();
    volts.sort_by(f64::total_cmp);
    volts.dedup();
    if volts.len() < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 distinct voltages, got {}", volts.len())));
    }
    Ok(families)
}

fn branch_sign(b: Branch) -> f64 {
    match b {
        Branch::Upper => 1.0,
        Branch::Lower => -1.0,
    }
}

fn param_name(idx: usize, families: &[String]) -> String {
    if idx < 2 {
        COEFF_NAMES[idx].to_string()
    } else {
        format!("offset[{}]", families[idx - 2])
    }
}

/// Linear-branch fit: each family follows `offset + (dd_par ± d_perp)·v_a`,
/// with `+` for the upper branch. Coefficients are shared, offsets are per
/// family. Errors come from the residual-scaled covariance.
pub fn fit_stark_positions(data: &[StarkPoint]) -> Result<StarkFitResult> {
    let families = validate_points(data)?;
    let n = data.len();
    let p = 2 + families.len();
    if n <= p {
        return Err(Error::InvalidArgument(format!("{n} points cannot constrain {p} parameters")));
    }
    let index: BTreeMap<&str, usize> = families.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, pt) in data.iter().enumerate() {
        x[(i, 0)] = pt.v_a;
        x[(i, 1)] = branch_sign(pt.branch) * pt.v_a;
        x[(i, 2 + index[pt.family.as_str()])] = 1.0;
        y[i] = pt.frequency;
    }

    // Column scaling keeps the rank test independent of voltage units.
    let scales: Vec<f64> = (0..p).map(|j| x.column(j).norm().max(f64::MIN_POSITIVE)).collect();
    let mut xs = x.clone();
    for (j, s) in scales.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = xs.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let (kmin, smin) = svd.singular_values.argmin();
    if smax <= 0.0 || smin / smax < 1e-10 {
        let v_t = svd.v_t.as_ref().expect("V requested");
        let null = v_t.row(kmin);
        let mut worst = 0;
        for j in 0..p {
            if null[j].abs() >= null[worst].abs() - 1e-12 {
                worst = j;
            }
        }
        return Err(Error::Unidentifiable(param_name(worst, &families)));
    }
    let beta_s = svd.solve(&y, 0.0).map_err(|e| Error::DegenerateData(e.to_string()))?;
    let beta: Vec<f64> = (0..p).map(|j| beta_s[j] / scales[j]).collect();
    let beta = DVector::from_vec(beta);
    let resid = &y - &x * &beta;
    let rss = resid.norm_squared();
    let s2 = rss / (n - p) as f64;
    let cov = invert_spd(&(x.transpose() * &x)).ok_or_else(|| Error::Unidentifiable(param_name(1, &families)))? * s2;
    let se = |j: usize| cov[(j, j)].max(0.0).sqrt();

    Ok(StarkFitResult {
        dd_par_per_volt: Estimate::new(beta[0], se(0)),
        d_perp_per_volt: Estimate::new(beta[1], se(1)),
        theta_r: None,
        zero_field_offsets: families.iter().enumerate().map(|(i, f)| (f.clone(), Estimate::new(beta[2 + i], se(2 + i)))).collect(),
        residual_rms: (rss / n as f64).sqrt(),
    })
}

/// Identifies a line family with one eigenlevel (by descending-energy index)
/// and a ground sublevel, for the full-Hamiltonian fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineFamily {
    pub level_index: usize,
    pub lower: GroundSublevel,
}

struct HamiltonianProblem<'a> {
    data: &'a [StarkPoint],
    families: &'a [String],
    family_map: &'a BTreeMap<String, LineFamily>,
    params: &'a FineStructureParams,
    theta_r: f64,
}

impl HamiltonianProblem<'_> {
    fn model(&self, p: &DVector<f64>, pt: &StarkPoint) -> f64 {
        let fam = self.family_map[&pt.family];
        let offset = p[2 + self.families.iter().position(|f| *f == pt.family).expect("known family")];
        let field = match ElectricField::new(p[0] * pt.v_a, p[1] * pt.v_a, self.theta_r) {
            Ok(f) => f,
            Err(_) => return f64::NAN,
        };
        let levels = match build_hamiltonian(self.params, &field).and_then(|h| eigenlevels(&h)) {
            Ok(l) => l,
            Err(_) => return f64::NAN,
        };
        let shift = match fam.lower {
            GroundSublevel::Zero => 0.0,
            GroundSublevel::PlusMinusOne => self.params.d_gs,
        };
        levels[fam.level_index].energy - shift + offset
    }
}

impl LeastSquaresProblem for HamiltonianProblem<'_> {
    fn n_params(&self) -> usize {
        2 + self.families.len()
    }

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.data.len(), self.data.iter().map(|pt| self.model(p, pt) - pt.frequency))
    }
}

/// Fits line positions with the full six-level model at a fixed field angle.
/// Each family is pinned to one eigenlevel and ground sublevel; the per-family
/// offsets absorb the zero-field reference of each line.
pub fn fit_stark_positions_hamiltonian(
    data: &[StarkPoint],
    family_map: &BTreeMap<String, LineFamily>,
    params: &FineStructureParams,
    theta_r: f64,
) -> Result<StarkFitResult> {
    let families = validate_points(data)?;
    for f in &families {
        match family_map.get(f) {
            Some(fam) if fam.level_index < 6 => {}
            Some(_) => return Err(Error::InvalidArgument(format!("level index out of range for family {f}"))),
            None => return Err(Error::InvalidArgument(format!("no level assignment for family {f}"))),
        }
    }
    let n = data.len();
    let p = 2 + families.len();
    if n <= p {
        return Err(Error::InvalidArgument(format!("{n} points cannot constrain {p} parameters")));
    }
    // Start from the linear fit; it is exact in the large-splitting limit.
    let lin = fit_stark_positions(data)?;
    let mut p0 = DVector::zeros(p);
    p0[0] = lin.dd_par_per_volt.value;
    p0[1] = lin.d_perp_per_volt.value.abs();
    for (i, f) in families.iter().enumerate() {
        p0[2 + i] = lin.zero_field_offsets[f].value;
    }
    let problem = HamiltonianProblem { data, families: &families, family_map, params, theta_r };
    // Re-centre offsets on the model so the solver starts near the minimum.
    let r = problem.residuals(&p0);
    for (i, f) in families.iter().enumerate() {
        let (sum, count) = data
            .iter()
            .zip(r.iter())
            .filter(|(pt, _)| &pt.family == f)
            .fold((0.0, 0usize), |(s, c), (_, r)| (s + r, c + 1));
        p0[2 + i] -= sum / count as f64;
    }
    let report = minimize(&problem, p0, LmOptions::default());
    let s2 = 2.0 * report.cost / (n - p) as f64;
    let cov = report.covariance(s2).ok_or_else(|| Error::Unidentifiable(param_name(1, &families)))?;
    let se = |j: usize| cov[(j, j)].max(0.0).sqrt();
    let b = &report.params;
    Ok(StarkFitResult {
        dd_par_per_volt: Estimate::new(b[0], se(0)),
        d_perp_per_volt: Estimate::new(b[1].abs(), se(1)),
        theta_r: None,
        zero_field_offsets: families.iter().enumerate().map(|(i, f)| (f.clone(), Estimate::new(b[2 + i], se(2 + i)))).collect(),
        residual_rms: (2.0 * report.cost / n as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(dd: f64, dp: f64, families: &[(&str, Branch, f64)]) -> Vec<StarkPoint> {
        let mut out = Vec::new();
        for k in 0..8 {
            let v = 2.0 * k as f64;
            for (name, branch, off) in families {
                out.push(StarkPoint {
                    v_a: v,
                    frequency: off + dd * v + branch_sign(*branch) * dp * v,
                    family: name.to_string(),
                    branch: *branch,
                });
            }
        }
        out
    }

    #[test]
    fn exact_recovery_without_noise() {
        let data = synth(0.42, 1.03, &[("ex0", Branch::Upper, 0.5), ("ey0", Branch::Lower, -0.3)]);
        let fit = fit_stark_positions(&data).unwrap();
        assert!((fit.dd_par_per_volt.value - 0.42).abs() < 1e-10);
        assert!((fit.d_perp_per_volt.value - 1.03).abs() < 1e-10);
        assert!((fit.zero_field_offsets["ey0"].value + 0.3).abs() < 1e-10);
        assert!(fit.residual_rms < 1e-10);
    }

    #[test]
    fn single_branch_data_is_unidentifiable() {
        let data = synth(0.42, 1.03, &[("a", Branch::Lower, 0.0), ("b", Branch::Lower, -2.88)]);
        match fit_stark_positions(&data) {
            Err(Error::Unidentifiable(name)) => assert_eq!(name, "d_perp_per_volt"),
            other => panic!("expected unidentifiable, got {other:?}"),
        }
    }

    #[test]
    fn one_family_rejected() {
        let data = synth(0.42, 1.03, &[("a", Branch::Lower, 0.0)]);
        assert!(matches!(fit_stark_positions(&data), Err(Error::InvalidArgument(_))));
    }
}
