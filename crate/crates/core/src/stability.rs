//! Monodromy matrices, Floquet multipliers and the stability verdict.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coords::RegState;
use crate::dynamics::{jacobian_vf, symplectic_j, vector_field_slice, Mat8};
use crate::eigen::eigenvalues8;
use crate::error::{Error, Result};
use crate::integrate::{drive, integrate_variational, IntegrationConfig};
use crate::orbitrep::TrigOrbit;
use crate::symmetry::{scale_energy, scale_state};

/// RK4 steps per period for the monodromy.
pub const MONODROMY_STEPS: usize = 50_000;

/// `X(period)` for the variational equation along the orbit through `start`.
pub fn monodromy(start: &RegState, m: f64, e_hat: f64, period: f64) -> Result<Mat8> {
    monodromy_with_steps(start, m, e_hat, period, MONODROMY_STEPS)
}

pub fn monodromy_with_steps(start: &RegState, m: f64, e_hat: f64, period: f64, steps: usize) -> Result<Mat8> {
    if !(period > 0.0) || steps == 0 {
        return Err(Error::InvalidParameter(format!("period {period} with {steps} steps")));
    }
    let mut field = |_s: f64, y: &[f64], out: &mut [f64]| vector_field_slice(y, out, m, e_hat);
    let mut jac = |y: &[f64]| jacobian_vf(&RegState::from_array(y), m, e_hat);
    let cfg = IntegrationConfig {
        max_steps: steps + 1,
        ..IntegrationConfig::rk4(period / steps as f64)
    };
    let (_, x) = integrate_variational(&mut field, &mut jac, &start.to_array(), (0.0, period), &cfg)?;
    Ok(x)
}

/// `‖XᵀJX − J‖∞` (max entry).
pub fn symplectic_defect(x: &Mat8) -> f64 {
    let j = symplectic_j();
    (x.transpose() * j * x - j).amax()
}

pub fn determinant(x: &Mat8) -> f64 {
    x.determinant()
}

/// Largest over `λ` of `min_λ' |λλ' − 1|`.
pub fn reciprocal_residual(eigs: &[Complex64]) -> f64 {
    eigs.iter()
        .map(|a| {
            eigs.iter()
                .map(|b| (a * b - 1.0).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    LinearlyStable,
    Unstable,
    Indeterminate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::LinearlyStable => "LinearlyStable",
            Verdict::Unstable => "Unstable",
            Verdict::Indeterminate => "Indeterminate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyConfig {
    pub tol_unit: f64,
    /// Number of multipliers at 1 forced by the symmetries (two defective
    /// pairs: the energy family and the rotation invariance).
    pub trivial_count: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            tol_unit: 1e-4,
            trivial_count: 4,
        }
    }
}

/// Multipliers left after removing the `trivial_count` closest to 1.
pub fn nontrivial(eigs: &[Complex64], trivial_count: usize) -> Vec<Complex64> {
    let mut idx: Vec<usize> = (0..eigs.len()).collect();
    idx.sort_by(|&i, &j| (eigs[i] - 1.0).norm().total_cmp(&(eigs[j] - 1.0).norm()));
    let drop: Vec<usize> = idx.into_iter().take(trivial_count).collect();
    (0..eigs.len()).filter(|i| !drop.contains(i)).map(|i| eigs[i]).collect()
}

pub fn max_modulus_excl_trivial(eigs: &[Complex64], trivial_count: usize) -> f64 {
    nontrivial(eigs, trivial_count)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn classify(eigs: &[Complex64], cfg: &ClassifyConfig) -> Verdict {
    let rest = nontrivial(eigs, cfg.trivial_count);
    let tol = cfg.tol_unit;
    if rest.iter().any(|z| z.norm() > 1.0 + tol) {
        return Verdict::Unstable;
    }
    if rest.iter().any(|z| (z.norm() - 1.0).abs() > tol) {
        return Verdict::Indeterminate;
    }
    // distinct conjugate pairs off the real axis
    let upper: Vec<Complex64> = rest.iter().copied().filter(|z| z.im > 0.0).collect();
    if rest.len() % 2 != 0 || upper.len() * 2 != rest.len() {
        return Verdict::Indeterminate;
    }
    let has_partner = upper.iter().all(|z| rest.iter().any(|w| (w - z.conj()).norm() <= tol));
    let sep = 10.0 * tol;
    let off_real = upper.iter().all(|z| (z - 1.0).norm() > sep && (z + 1.0).norm() > sep);
    let distinct = upper
        .iter()
        .enumerate()
        .all(|(i, a)| upper[i + 1..].iter().all(|b| (a - b).norm() > sep));
    if has_partner && off_real && distinct {
        Verdict::LinearlyStable
    } else {
        Verdict::Indeterminate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub m: f64,
    pub monodromy: Mat8,
    pub eigenvalues: Vec<Complex64>,
    /// Largest modulus after removing the trivial multipliers.
    pub max_modulus: f64,
    pub verdict: Verdict,
    pub symplectic_defect: f64,
    pub determinant: f64,
    pub reciprocal_residual: f64,
}

impl StabilityReport {
    pub fn from_monodromy(m: f64, x: Mat8, cfg: &ClassifyConfig) -> Result<Self> {
        let eigenvalues = eigenvalues8(&x)?;
        Ok(StabilityReport {
            m,
            max_modulus: max_modulus_excl_trivial(&eigenvalues, cfg.trivial_count),
            verdict: classify(&eigenvalues, cfg),
            symplectic_defect: symplectic_defect(&x),
            determinant: determinant(&x),
            reciprocal_residual: reciprocal_residual(&eigenvalues),
            eigenvalues,
            monodromy: x,
        })
    }
}

/// Stability of a trigonometric orbit (period `2π`), starting the
/// variational run at the symmetric configuration `s = -π/4`.
pub fn analyze_orbit(orb: &TrigOrbit, cfg: &ClassifyConfig) -> Result<StabilityReport> {
    let start = orb.eval(-FRAC_PI_4);
    let x = monodromy(&start, orb.m, orb.e_hat, 2.0 * PI)?;
    StabilityReport::from_monodromy(orb.m, x, cfg)
}

/// Independent analyses in parallel; order follows the input.
pub fn analyze_all(orbits: &[TrigOrbit], cfg: &ClassifyConfig) -> Vec<Result<StabilityReport>> {
    orbits.par_iter().map(|o| analyze_orbit(o, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub eps: Vec<f64>,
    pub eigenvalues: Vec<Vec<Complex64>>,
    /// Largest eigenvalue mismatch against `ε = 1` (best matching).
    pub max_eigen_diff: f64,
    /// Largest `‖X_ε − Y_ε⁻¹ X_1 Y_ε‖∞`.
    pub max_conjugation_residual: f64,
}

/// Minimal over permutations of the largest pairwise distance.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    fn go(a: &[Complex64], b: &[Complex64], used: &mut Vec<bool>, i: usize, cur: f64, best: &mut f64) {
        if cur >= *best {
            return;
        }
        if i == a.len() {
            *best = cur;
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                go(a, b, used, i + 1, cur.max((a[i] - b[j]).norm()), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    best
}

/// `Y_ε⁻¹ X Y_ε` with `Y_ε = diag(ε^-1/2 I, ε^1/2 I)`.
pub fn conjugate_by_scaling(x: &Mat8, eps: f64) -> Mat8 {
    let mut y = x.clone_owned();
    for i in 0..8 {
        for j in 0..8 {
            let ri = if i < 4 { eps } else { 1.0 };
            let cj = if j < 4 { eps } else { 1.0 };
            y[(i, j)] *= ri / cj;
        }
    }
    y
}

/// Computes the monodromy of `γ_ε(s) = (ε u(εs), v(εs))` (period
/// `period/ε`, energy `Ê/ε²`) for each `ε` and compares with `ε = 1`.
pub fn verify_scaling_invariance(
    start: &RegState,
    m: f64,
    e_hat: f64,
    period: f64,
    eps_list: &[f64],
) -> Result<ScalingReport> {
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("scale factors must be positive".into()));
    }
    let x1 = monodromy(start, m, e_hat, period)?;
    let e1 = eigenvalues8(&x1)?;
    let results: Vec<Result<(Mat8, Vec<Complex64>)>> = eps_list
        .par_iter()
        .map(|&eps| {
            let x = if eps == 1.0 {
                x1
            } else {
                monodromy(&scale_state(start, eps), m, scale_energy(e_hat, eps), period / eps)?
            };
            Ok((x, eigenvalues8(&x)?))
        })
        .collect();
    let mut report = ScalingReport {
        eps: eps_list.to_vec(),
        eigenvalues: Vec::new(),
        max_eigen_diff: 0.0,
        max_conjugation_residual: 0.0,
    };
    for (eps, res) in eps_list.iter().zip(results) {
        let (x, ev) = res?;
        report.max_eigen_diff = report.max_eigen_diff.max(multiset_distance(&e1, &ev));
        let resid = (x - conjugate_by_scaling(&x1, *eps)).amax();
        report.max_conjugation_residual = report.max_conjugation_residual.max(resid);
        report.eigenvalues.push(ev);
    }
    Ok(report)
}

/// Default RK4 steps per period of the divergence probe.
pub const PROBE_STEPS_PER_PERIOD: usize = 5000;

/// Integrates for up to `max_periods` periods and returns the first period
/// index at which `‖state‖ > threshold` (a non-finite state counts as an
/// escape), or `None`.
pub fn divergence_probe(
    start: &RegState,
    m: f64,
    e_hat: f64,
    period: f64,
    max_periods: usize,
    threshold: f64,
    steps_per_period: usize,
) -> Result<Option<usize>> {
    if start.norm() > threshold {
        return Ok(Some(0));
    }
    let mut field = |_s: f64, y: &[f64], out: &mut [f64]| vector_field_slice(y, out, m, e_hat);
    let cfg = IntegrationConfig {
        max_steps: steps_per_period + 1,
        ..IntegrationConfig::rk4(period / steps_per_period as f64)
    };
    let mut y = start.to_array().to_vec();
    for k in 0..max_periods {
        let mut escaped = false;
        let (_, yn) = drive(&mut field, &y, (0.0, period), &cfg, 8, &mut |_, z| {
            let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            escaped = !(norm <= threshold);
            !escaped
        })?;
        if escaped {
            return Ok(Some(k));
        }
        y = yn;
    }
    Ok(None)
}

/// `X` as a dense matrix (for callers that work with `DMatrix`).
pub fn to_dmatrix(x: &Mat8) -> DMatrix<f64> {
    DMatrix::from_column_slice(8, 8, x.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn reference_m1() -> Vec<Complex64> {
        vec![
            c(-0.9888731375, 0.1487612779),
            c(-0.9888731375, -0.1487612779),
            c(-0.9973584383, 0.07263708002),
            c(-0.9973584383, -0.07263708002),
            c(0.9999060579, 0.01370676220),
            c(0.9999060579, -0.01370676220),
            c(1.0, 0.0),
            c(1.0, 0.0),
        ]
    }

    #[test]
    fn classify_examples() {
        let cfg = ClassifyConfig::default();
        assert_eq!(classify(&reference_m1(), &cfg), Verdict::LinearlyStable);
        let mut bad = reference_m1();
        bad[0] = c(1.8, 0.0);
        bad[1] = c(1.0 / 1.8, 0.0);
        assert_eq!(classify(&bad, &cfg), Verdict::Unstable);
        assert_eq!(classify(&[c(1.0, 0.0); 8], &cfg), Verdict::Indeterminate);
    }

    #[test]
    fn reciprocal_and_distance() {
        let e = reference_m1();
        assert!(reciprocal_residual(&e) < 1e-9);
        let mut f = e.clone();
        f.reverse();
        assert_eq!(multiset_distance(&e, &f), 0.0);
        assert!(max_modulus_excl_trivial(&e, 4) < 1.0 + 1e-9);
    }

    #[test]
    fn conjugation_is_identity_at_one() {
        let x = Mat8::from_fn(|i, j| (i * 8 + j) as f64);
        assert_eq!(conjugate_by_scaling(&x, 1.0), x);
        let y = conjugate_by_scaling(&x, 2.0);
        assert_eq!(y[(0, 4)], 2.0 * x[(0, 4)]);
        assert_eq!(y[(4, 0)], 0.5 * x[(4, 0)]);
    }

    #[test]
    fn probe_threshold_zero() {
        let r = RegState::new([0.5, 0.1, 0.4, 0.2], [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(divergence_probe(&r, 1.0, -2.8, 1.0, 5, 0.0, 10).unwrap(), Some(0));
    }
}
