//! Symmetry-constrained trigonometric polynomials for 2π-periodic orbits
//! with a simultaneous binary collision at `s = 0`, and the residual
//! functional `L = ∫ ‖γ' - J∇Γ̂(γ)‖ ds`.
//!
//! With `k_i = 2i - 1`:
//! `u1 = Σ a_i sin(k_i s)`, `u2 = -Σ b_i sin(k_i s)`,
//! `v1 = Σ c_i cos(k_i s)`, `v2 = -Σ d_i cos(k_i s)`,
//! `u3(s) = u1(s - π/2)`, `u4(s) = u2(s + π/2)`,
//! `v3(s) = v1(s - π/2)`, `v4(s) = v2(s + π/2)`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coords::{gamma_hat, RegState};
use crate::dynamics::vector_field;
use crate::error::{Error, Result};
use crate::symmetry::SymmetryOp;

/// Default number of trapezoid nodes for `L`.
pub const L_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigOrbit {
    pub m: f64,
    pub n: usize,
    pub e_hat: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

/// `sin(k_i x)` and `cos(k_i x)` for the odd frequencies `k_i = 2i-1`.
fn odd_harmonics(x: f64, n: usize, sin: &mut [f64], cos: &mut [f64]) {
    if n == 0 {
        return;
    }
    let (s1, c1) = x.sin_cos();
    let (s2, c2) = (2.0 * x).sin_cos();
    sin[0] = s1;
    cos[0] = c1;
    // angle addition by 2x
    for i in 1..n {
        sin[i] = sin[i - 1] * c2 + cos[i - 1] * s2;
        cos[i] = cos[i - 1] * c2 - sin[i - 1] * s2;
    }
}

#[inline]
fn freq(i: usize) -> f64 {
    (2 * i + 1) as f64
}

/// Harmonics at `s`, `s - π/2` and `s + π/2`.
#[derive(Debug, Clone)]
struct Harmonics {
    sin: [Vec<f64>; 3],
    cos: [Vec<f64>; 3],
}

impl Harmonics {
    fn at(s: f64, n: usize) -> Self {
        let mut h = Harmonics {
            sin: std::array::from_fn(|_| vec![0.0; n]),
            cos: std::array::from_fn(|_| vec![0.0; n]),
        };
        for (k, x) in [s, s - FRAC_PI_2, s + FRAC_PI_2].into_iter().enumerate() {
            odd_harmonics(x, n, &mut h.sin[k], &mut h.cos[k]);
        }
        h
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn dot_freq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).enumerate().map(|(i, (a, b))| freq(i) * a * b).sum()
}

impl TrigOrbit {
    pub fn new(m: f64, e_hat: f64, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        let n = a.len();
        if b.len() != n || c.len() != n || d.len() != n {
            return Err(Error::InvalidParameter("coefficient lists differ in length".into()));
        }
        Ok(TrigOrbit { m, n, e_hat, a, b, c, d })
    }

    pub fn zeros(n: usize, m: f64, e_hat: f64) -> Self {
        TrigOrbit {
            m,
            n,
            e_hat,
            a: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![0.0; n],
            d: vec![0.0; n],
        }
    }

    /// Checks the internal consistency of a deserialized orbit.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.a.len() != n || self.b.len() != n || self.c.len() != n || self.d.len() != n {
            return Err(Error::InvalidParameter(format!("coefficient lists must have length n = {n}")));
        }
        if !self.e_hat.is_finite() || self.coefficients().iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite orbit data".into()));
        }
        crate::coords::validate_mass(self.m)
    }

    /// Coefficients packed as `[a, b, c, d]`.
    pub fn coefficients(&self) -> Vec<f64> {
        [&self.a[..], &self.b[..], &self.c[..], &self.d[..]].concat()
    }

    pub fn with_coefficients(&self, x: &[f64]) -> TrigOrbit {
        let n = self.n;
        assert_eq!(x.len(), 4 * n);
        TrigOrbit {
            m: self.m,
            n,
            e_hat: self.e_hat,
            a: x[..n].to_vec(),
            b: x[n..2 * n].to_vec(),
            c: x[2 * n..3 * n].to_vec(),
            d: x[3 * n..].to_vec(),
        }
    }

    fn eval_h(&self, h: &Harmonics) -> RegState {
        RegState {
            u: [
                dot(&self.a, &h.sin[0]),
                -dot(&self.b, &h.sin[0]),
                dot(&self.a, &h.sin[1]),
                -dot(&self.b, &h.sin[2]),
            ],
            v: [
                dot(&self.c, &h.cos[0]),
                -dot(&self.d, &h.cos[0]),
                dot(&self.c, &h.cos[1]),
                -dot(&self.d, &h.cos[2]),
            ],
        }
    }

    fn eval_deriv_h(&self, h: &Harmonics) -> RegState {
        RegState {
            u: [
                dot_freq(&self.a, &h.cos[0]),
                -dot_freq(&self.b, &h.cos[0]),
                dot_freq(&self.a, &h.cos[1]),
                -dot_freq(&self.b, &h.cos[2]),
            ],
            v: [
                -dot_freq(&self.c, &h.sin[0]),
                dot_freq(&self.d, &h.sin[0]),
                -dot_freq(&self.c, &h.sin[1]),
                dot_freq(&self.d, &h.sin[2]),
            ],
        }
    }

    pub fn eval(&self, s: f64) -> RegState {
        self.eval_h(&Harmonics::at(s, self.n))
    }

    pub fn eval_deriv(&self, s: f64) -> RegState {
        self.eval_deriv_h(&Harmonics::at(s, self.n))
    }

    /// `Γ̂(γ(π/4))`, the level-set defect used to tune the energy.
    pub fn gamma_at_quarter(&self) -> Result<f64> {
        gamma_hat(&self.eval(PI / 4.0), self.m, self.e_hat)
    }

    /// `v1(0)^2 + v2(0)^2`.
    pub fn collision_momentum(&self) -> f64 {
        let z = self.eval(0.0);
        z.v[0] * z.v[0] + z.v[1] * z.v[1]
    }

    /// Projects samples of a curve on the uniform grid `s_j = 2πj/N` by
    /// least squares, fitting each coefficient family to both components
    /// that carry it.
    pub fn project(samples: &[RegState], n: usize, m: f64, e_hat: f64) -> Result<TrigOrbit> {
        let big_n = samples.len();
        if big_n < 2 * n {
            return Err(Error::InvalidParameter(format!(
                "{big_n} samples cannot determine {n} terms"
            )));
        }
        let grid: Vec<Harmonics> = (0..big_n)
            .map(|j| Harmonics::at(2.0 * PI * j as f64 / big_n as f64, n))
            .collect();
        // (primary component, shifted component, use sin?, shift slot, sign)
        let fit = |first: usize, second: usize, sines: bool, slot: usize, sign: f64| -> Result<Vec<f64>> {
            let mut mat = DMatrix::<f64>::zeros(2 * big_n, n);
            let mut rhs = DVector::<f64>::zeros(2 * big_n);
            for (j, h) in grid.iter().enumerate() {
                let z = samples[j].to_array();
                let (b0, b1) = if sines { (&h.sin[0], &h.sin[slot]) } else { (&h.cos[0], &h.cos[slot]) };
                for i in 0..n {
                    mat[(j, i)] = sign * b0[i];
                    mat[(big_n + j, i)] = sign * b1[i];
                }
                rhs[j] = z[first];
                rhs[big_n + j] = z[second];
            }
            let sol = mat
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(sol.iter().copied().collect())
        };
        let a = fit(0, 2, true, 1, 1.0)?;
        let b = fit(1, 3, true, 2, -1.0)?;
        let c = fit(4, 6, false, 1, 1.0)?;
        let d = fit(5, 7, false, 2, -1.0)?;
        TrigOrbit::new(m, e_hat, a, b, c, d)
    }
}

/// The linear maps `x -> γ(s_j)` and `x -> γ'(s_j)` on a uniform grid,
/// with `x` the packed coefficients.
#[derive(Debug, Clone)]
pub struct GridBasis {
    pub n: usize,
    pub nodes: Vec<f64>,
    /// `8N x 4n`
    pub value: DMatrix<f64>,
    /// `8N x 4n`
    pub deriv: DMatrix<f64>,
}

impl GridBasis {
    pub fn new(n: usize, big_n: usize) -> Self {
        let nodes: Vec<f64> = (0..big_n).map(|j| 2.0 * PI * j as f64 / big_n as f64).collect();
        let mut value = DMatrix::zeros(8 * big_n, 4 * n);
        let mut deriv = DMatrix::zeros(8 * big_n, 4 * n);
        for (j, &s) in nodes.iter().enumerate() {
            let h = Harmonics::at(s, n);
            let r = 8 * j;
            for i in 0..n {
                let k = freq(i);
                let (ca, cb, cc, cd) = (i, n + i, 2 * n + i, 3 * n + i);
                value[(r, ca)] = h.sin[0][i];
                value[(r + 1, cb)] = -h.sin[0][i];
                value[(r + 2, ca)] = h.sin[1][i];
                value[(r + 3, cb)] = -h.sin[2][i];
                value[(r + 4, cc)] = h.cos[0][i];
                value[(r + 5, cd)] = -h.cos[0][i];
                value[(r + 6, cc)] = h.cos[1][i];
                value[(r + 7, cd)] = -h.cos[2][i];

                deriv[(r, ca)] = k * h.cos[0][i];
                deriv[(r + 1, cb)] = -k * h.cos[0][i];
                deriv[(r + 2, ca)] = k * h.cos[1][i];
                deriv[(r + 3, cb)] = -k * h.cos[2][i];
                deriv[(r + 4, cc)] = -k * h.sin[0][i];
                deriv[(r + 5, cd)] = k * h.sin[0][i];
                deriv[(r + 6, cc)] = -k * h.sin[1][i];
                deriv[(r + 7, cd)] = k * h.sin[2][i];
            }
        }
        GridBasis { n, nodes, value, deriv }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Pointwise residual `γ'(s) - J∇Γ̂(γ(s))`.
pub fn pointwise_residual(orb: &TrigOrbit, s: f64) -> Result<RegState> {
    let h = Harmonics::at(s, orb.n);
    let z = orb.eval_h(&h);
    let dz = orb.eval_deriv_h(&h);
    let f = vector_field(&z, orb.m, orb.e_hat)?;
    let (a, b) = (dz.to_array(), f.to_array());
    Ok(RegState::from_array(&std::array::from_fn::<f64, 8, _>(|i| a[i] - b[i])))
}

/// `L` by the trapezoid rule on `grid` uniform nodes (Euclidean norm).
pub fn residual_l_on(orb: &TrigOrbit, grid: usize) -> Result<f64> {
    let mut sum = 0.0;
    for j in 0..grid {
        let s = 2.0 * PI * j as f64 / grid as f64;
        sum += pointwise_residual(orb, s)?.norm();
    }
    Ok(sum * 2.0 * PI / grid as f64)
}

/// `L` on the default 512-node grid.
pub fn residual_l(orb: &TrigOrbit) -> Result<f64> {
    residual_l_on(orb, L_GRID)
}

/// Tolerance of the symmetry relations.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Checks the collision structure at `s = 0` and the D4 relations
/// `S_F γ(s) = γ(s + π/2)`, `S_G γ(s) = γ(-s)`, `S_F S_G γ(s) = γ(π/2 - s)`
/// on a sample grid, for any 2π-periodic curve.
pub fn symmetry_check_fn(curve: &dyn Fn(f64) -> RegState, tol: f64) -> bool {
    let z0 = curve(0.0);
    let scale = (0..16)
        .map(|j| curve(2.0 * PI * j as f64 / 16.0).norm())
        .fold(1.0, f64::max);
    let tol = tol * scale;
    if [z0.u[0], z0.u[1], z0.v[2], z0.v[3]].iter().any(|x| x.abs() > tol) {
        return false;
    }
    let sf = SymmetryOp::SF;
    let sg = SymmetryOp::SG;
    let sfsg = sf.compose(&sg);
    (0..64).all(|j| {
        let s = 2.0 * PI * (j as f64 + 0.37) / 64.0;
        let z = curve(s);
        sf.apply(&z).dist_inf(&curve(s + FRAC_PI_2)) <= tol
            && sg.apply(&z).dist_inf(&curve(-s)) <= tol
            && sfsg.apply(&z).dist_inf(&curve(FRAC_PI_2 - s)) <= tol
    })
}

pub fn symmetry_check(orb: &TrigOrbit) -> bool {
    symmetry_check_fn(&|s| orb.eval(s), SYMMETRY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_orbit() -> TrigOrbit {
        TrigOrbit::new(
            0.8,
            -2.0,
            vec![1.0, 0.1, -0.02],
            vec![0.4, -0.05, 0.01],
            vec![-3.0, 0.3, 0.07],
            vec![1.2, 0.2, -0.03],
        )
        .unwrap()
    }

    #[test]
    fn collision_structure_at_zero() {
        let z = sample_orbit().eval(0.0);
        assert_eq!((z.u[0], z.u[1]), (0.0, 0.0));
        assert!(z.v[2].abs() < 1e-15 && z.v[3].abs() < 1e-15);
    }

    #[test]
    fn single_term_shift_identity() {
        let orb = TrigOrbit::new(1.0, 0.0, vec![1.0], vec![0.0], vec![0.0], vec![0.0]).unwrap();
        let z = orb.eval(FRAC_PI_2);
        assert!((z.u[0] - 1.0).abs() < 1e-15);
        assert!(z.u[2].abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let orb = sample_orbit();
        let s = 0.77;
        let h = 1e-6;
        let (p, m) = (orb.eval(s + h).to_array(), orb.eval(s - h).to_array());
        let d = orb.eval_deriv(s).to_array();
        for i in 0..8 {
            assert!(((p[i] - m[i]) / (2.0 * h) - d[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn grid_basis_reproduces_eval() {
        let orb = sample_orbit();
        let gb = GridBasis::new(orb.n, 16);
        let x = DVector::from_vec(orb.coefficients());
        let val = &gb.value * &x;
        let der = &gb.deriv * &x;
        for (j, &s) in gb.nodes.iter().enumerate() {
            let (z, dz) = (orb.eval(s).to_array(), orb.eval_deriv(s).to_array());
            for i in 0..8 {
                assert!((val[8 * j + i] - z[i]).abs() < 1e-13);
                assert!((der[8 * j + i] - dz[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_recovers_coefficients() {
        let orb = sample_orbit();
        let samples: Vec<RegState> = (0..64).map(|j| orb.eval(2.0 * PI * j as f64 / 64.0)).collect();
        let p = TrigOrbit::project(&samples, 3, orb.m, orb.e_hat).unwrap();
        for (x, y) in p.coefficients().iter().zip(orb.coefficients()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetry_holds_by_construction() {
        assert!(symmetry_check(&sample_orbit()));
    }

    #[test]
    fn even_frequency_breaks_symmetry() {
        let orb = sample_orbit();
        let bumped = |s: f64| {
            let mut z = orb.eval(s);
            z.u[0] += 1e-3 * (2.0 * s).sin();
            z
        };
        assert!(!symmetry_check_fn(&bumped, SYMMETRY_TOL));
    }

    #[test]
    fn zero_orbit_is_degenerate() {
        let z = TrigOrbit::zeros(4, 1.0, -1.0);
        assert!(matches!(residual_l(&z), Err(Error::DegenerateInput(_))));
    }
}
