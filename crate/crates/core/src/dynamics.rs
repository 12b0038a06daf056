//! The regularized flow `u' = ∂Γ̂/∂v`, `v' = -∂Γ̂/∂u`, its Jacobian, the
//! time change `dt/ds`, and the reduced equal-mass system.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::coords::{cluster_norms, mterms, RegState};
use crate::dual::{Dual, Scalar};
use crate::error::{Error, Result};

pub type Mat8 = SMatrix<f64, 8, 8>;

/// Reduced equal-mass coordinates `(Q1, Q2, P1, P2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QPState {
    pub q: [f64; 2],
    pub p: [f64; 2],
}

impl QPState {
    pub fn new(q1: f64, q2: f64, p1: f64, p2: f64) -> Self {
        QPState { q: [q1, q2], p: [p1, p2] }
    }

    pub fn from_array(z: &[f64]) -> Self {
        QPState::new(z[0], z[1], z[2], z[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.q[0], self.q[1], self.p[0], self.p[1]]
    }
}

/// Gradient `(∂Γ̂/∂u1..u4, ∂Γ̂/∂v1..v4)` written out term by term.
pub(crate) fn grad_generic<T: Scalar>(u: &[T; 4], v: &[T; 4], m: f64, e_hat: f64) -> Result<[T; 8]> {
    let mt = mterms(u, v).m;
    let [m1, m2, m3, m4, m5, m6, m7, m8] = mt;
    let r56 = m5 * m5 + m6 * m6;
    let r78 = m7 * m7 + m8 * m8;
    if r56.re() == 0.0 {
        return Err(Error::DegenerateInput(
            "collision of the two mass-1 bodies (M5 = M6 = 0)".into(),
        ));
    }
    if r78.re() == 0.0 {
        return Err(Error::DegenerateInput(
            "collision of the two mass-m bodies (M7 = M8 = 0)".into(),
        ));
    }
    let s56 = r56.sqrt();
    let s78 = r78.sqrt();
    let s56c = s56 * r56;
    let s78c = s78 * r78;

    let (a, b) = cluster_norms(u);
    let ab = a * b;
    let va = v[0] * v[0] + v[1] * v[1];
    let vb = v[2] * v[2] + v[3] * v[3];
    let c1 = T::cst((1.0 + 1.0 / m) / 8.0);
    let c2 = T::cst((1.0 - 1.0 / m) / 8.0);
    let two = T::cst(2.0);
    let mm2 = T::cst(2.0 * m * m);
    let four_m = T::cst(4.0 * m);
    let e2 = T::cst(2.0 * e_hat);
    let k56 = two * ab / s56c;
    let k78 = mm2 * ab / s78c;
    let (u1, u2, u3, u4) = (u[0], u[1], u[2], u[3]);

    let du1 = c1 * u1 * vb + c2 * (m3 * v[0] + m4 * v[1]) - two * u1 * b / s56
        + k56 * (m5 * u1 + m6 * u2)
        - mm2 * u1 * b / s78
        + k78 * (m7 * u1 + m8 * u2)
        - four_m * u1
        - e2 * u1 * b;
    let du2 = c1 * u2 * vb + c2 * (-(m3 * v[1]) + m4 * v[0]) - two * u2 * b / s56
        + k56 * (-(m5 * u2) + m6 * u1)
        - mm2 * u2 * b / s78
        + k78 * (-(m7 * u2) + m8 * u1)
        - four_m * u2
        - e2 * u2 * b;
    let du3 = c1 * u3 * va + c2 * (m1 * v[2] + m2 * v[3]) - two * u3 * a / s56
        + k56 * (m5 * u3 + m6 * u4)
        - mm2 * u3 * a / s78
        + k78 * (-(m7 * u3) - m8 * u4)
        - four_m * u3
        - e2 * u3 * a;
    let du4 = c1 * u4 * va + c2 * (-(m1 * v[3]) + m2 * v[2]) - two * u4 * a / s56
        + k56 * (-(m5 * u4) + m6 * u3)
        - mm2 * u4 * a / s78
        + k78 * (m7 * u4 - m8 * u3)
        - four_m * u4
        - e2 * u4 * a;

    let dv1 = c1 * v[0] * b + c2 * (m3 * u1 + m4 * u2);
    let dv2 = c1 * v[1] * b + c2 * (-(m3 * u2) + m4 * u1);
    let dv3 = c1 * v[2] * a + c2 * (m1 * u3 + m2 * u4);
    let dv4 = c1 * v[3] * a + c2 * (-(m1 * u4) + m2 * u3);

    Ok([du1, du2, du3, du4, dv1, dv2, dv3, dv4])
}

/// `∇Γ̂ = (∂Γ̂/∂u, ∂Γ̂/∂v)`.
pub fn grad_gamma_hat(r: &RegState, m: f64, e_hat: f64) -> Result<[f64; 8]> {
    grad_generic(&r.u, &r.v, m, e_hat)
}

/// The Hamiltonian vector field `J∇Γ̂`.
pub fn vector_field(r: &RegState, m: f64, e_hat: f64) -> Result<RegState> {
    let g = grad_gamma_hat(r, m, e_hat)?;
    Ok(RegState {
        u: [g[4], g[5], g[6], g[7]],
        v: [-g[0], -g[1], -g[2], -g[3]],
    })
}

/// Vector field on a flat 8-array, for use with the integrators.
pub fn vector_field_slice(z: &[f64], out: &mut [f64], m: f64, e_hat: f64) -> Result<()> {
    let u = [z[0], z[1], z[2], z[3]];
    let v = [z[4], z[5], z[6], z[7]];
    let g = grad_generic(&u, &v, m, e_hat)?;
    out[..4].copy_from_slice(&g[4..]);
    for i in 0..4 {
        out[4 + i] = -g[i];
    }
    Ok(())
}

/// Jacobian of the vector field, `J ∇²Γ̂`, by forward-mode differentiation
/// of the analytic gradient.
pub fn jacobian_vf(r: &RegState, m: f64, e_hat: f64) -> Result<Mat8> {
    let z = r.to_array();
    let mut jac = Mat8::zeros();
    for j in 0..8 {
        let d: [Dual; 8] = std::array::from_fn(|i| Dual::new(z[i], if i == j { 1.0 } else { 0.0 }));
        let u = [d[0], d[1], d[2], d[3]];
        let v = [d[4], d[5], d[6], d[7]];
        let g = grad_generic(&u, &v, m, e_hat)?;
        for i in 0..4 {
            jac[(i, j)] = g[4 + i].du;
            jac[(4 + i, j)] = -g[i].du;
        }
    }
    Ok(jac)
}

/// Jacobian of the vector field by central differences of the analytic
/// gradient, step `1e-6 * max(1, |r_j|)`.
pub fn jacobian_vf_fd(r: &RegState, m: f64, e_hat: f64) -> Result<Mat8> {
    let z = r.to_array();
    let mut jac = Mat8::zeros();
    let mut fp = [0.0; 8];
    let mut fm = [0.0; 8];
    for j in 0..8 {
        let h = 1e-6 * z[j].abs().max(1.0);
        let mut zp = z;
        let mut zm = z;
        zp[j] += h;
        zm[j] -= h;
        vector_field_slice(&zp, &mut fp, m, e_hat)?;
        vector_field_slice(&zm, &mut fm, m, e_hat)?;
        for i in 0..8 {
            jac[(i, j)] = (fp[i] - fm[i]) / (zp[j] - zm[j]);
        }
    }
    Ok(jac)
}

/// `dt/ds = (u1^2+u2^2)(u3^2+u4^2)`.
pub fn time_rate(r: &RegState) -> f64 {
    let (a, b) = cluster_norms(&r.u);
    a * b
}

/// The standard symplectic matrix `J = [[0, I], [-I, 0]]`.
pub fn symplectic_j() -> Mat8 {
    let mut j = Mat8::zeros();
    for i in 0..4 {
        j[(i, 4 + i)] = 1.0;
        j[(4 + i, i)] = -1.0;
    }
    j
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Reduced equal-mass Hamiltonian `Γ(Q, P; E)`.
pub fn gamma_reduced(qp: &QPState, e: f64) -> Result<f64> {
    let ([q1, q2], [p1, p2]) = (qp.q, qp.p);
    let (s1, s2) = (q1 * q1, q2 * q2);
    let r = s1 * s1 + s2 * s2;
    if r == 0.0 {
        return Err(Error::DegenerateInput("total collapse (Q1 = Q2 = 0)".into()));
    }
    Ok((p1 * p1 * s2 + p2 * p2 * s1) / 16.0 - SQRT2 * (s1 + s2) - SQRT2 * s1 * s2 / r.sqrt() - e * s1 * s2)
}

/// Reduced vector field `d(Q, P)/dσ`.
pub fn reduced_vf(qp: &QPState, e: f64) -> Result<QPState> {
    let ([q1, q2], [p1, p2]) = (qp.q, qp.p);
    let r = q1.powi(4) + q2.powi(4);
    if r == 0.0 {
        return Err(Error::DegenerateInput("total collapse (Q1 = Q2 = 0)".into()));
    }
    let sr = r.sqrt();
    let r32 = r * sr;
    let dq1 = p1 * q2 * q2 / 8.0;
    let dq2 = p2 * q1 * q1 / 8.0;
    let dp1 = -p2 * p2 * q1 / 8.0 + 2.0 * SQRT2 * q1 + 2.0 * SQRT2 * q1 * q2 * q2 / sr
        - 2.0 * SQRT2 * q1.powi(5) * q2 * q2 / r32
        + 2.0 * e * q1 * q2 * q2;
    let dp2 = -p1 * p1 * q2 / 8.0 + 2.0 * SQRT2 * q2 + 2.0 * SQRT2 * q2 * q1 * q1 / sr
        - 2.0 * SQRT2 * q2.powi(5) * q1 * q1 / r32
        + 2.0 * e * q2 * q1 * q1;
    Ok(QPState::new(dq1, dq2, dp1, dp2))
}

/// `dτ/dσ = Q1^2 Q2^2`.
pub fn reduced_time_rate(qp: &QPState) -> f64 {
    (qp.q[0] * qp.q[1]).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collision_velocity_by_hand() {
        let r = RegState::new([0.0, 0.0, 1.0, 1.0], [4.0, 0.0, 0.0, 0.0]);
        let f = vector_field(&r, 1.0, -2.0).unwrap();
        assert!((f.u[0] - 2.0).abs() < 1e-15);
        let m = 0.3;
        let g = grad_gamma_hat(&r, m, -1.0).unwrap();
        assert!((g[4] - (1.0 + 1.0 / m) / 8.0 * 4.0 * 2.0).abs() < 1e-14);
    }

    #[test]
    fn time_rate_values() {
        assert_eq!(time_rate(&RegState::new([1.0, 0.0, 1.0, 0.0], [0.0; 4])), 1.0);
        assert_eq!(time_rate(&RegState::new([1.0, 1.0, 2.0, 0.0], [0.0; 4])), 8.0);
        assert_eq!(time_rate(&RegState::new([0.0, 0.0, 2.0, 0.5], [1.0; 4])), 0.0);
    }

    #[test]
    fn reduced_field_and_hamiltonian_values() {
        let th = 2.5;
        let f = reduced_vf(&QPState::new(1.0, 1.0, -th, th), -1.0).unwrap();
        assert!((f.q[0] + th / 8.0).abs() < 1e-15);
        assert!((f.q[1] - th / 8.0).abs() < 1e-15);

        let e = (th * th - 16.0 * SQRT2 - 8.0) / 8.0;
        assert!(gamma_reduced(&QPState::new(1.0, 1.0, -th, th), e).unwrap().abs() < 1e-14);
        let p1 = (16.0 * SQRT2).sqrt();
        assert!(gamma_reduced(&QPState::new(0.0, 1.0, p1, 0.0), 0.7).unwrap().abs() < 1e-14);
        let g = gamma_reduced(&QPState::new(1.0, 1.0, 0.0, 0.0), 0.0).unwrap();
        assert!((g + 2.0 * SQRT2 + 1.0).abs() < 1e-14);
        assert!(reduced_vf(&QPState::new(0.0, 0.0, 1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn reduced_field_swap_equivariance() {
        let z = QPState::new(0.7, -1.3, 0.4, 2.2);
        let zs = QPState::new(-1.3, 0.7, 2.2, 0.4);
        let f = reduced_vf(&z, -2.1).unwrap();
        let fs = reduced_vf(&zs, -2.1).unwrap();
        assert_eq!(fs.to_array(), [f.q[1], f.q[0], f.p[1], f.p[0]]);
    }

    #[test]
    fn dual_jacobian_matches_central_differences() {
        let r = RegState::new([0.8, -0.3, 0.6, 0.9], [1.1, -0.4, 0.2, 0.7]);
        let a = jacobian_vf(&r, 0.6, -2.2).unwrap();
        let b = jacobian_vf_fd(&r, 0.6, -2.2).unwrap();
        assert!((a - b).amax() < 1e-7 * (1.0 + a.amax()));
    }

    #[test]
    fn jacobian_is_hamiltonian() {
        // J H with H symmetric means (J^T A) is symmetric.
        let r = RegState::new([0.2, 1.3, -0.6, 0.4], [-0.3, 0.5, 1.7, -0.9]);
        let a = jacobian_vf(&r, 0.45, -1.2).unwrap();
        let h = symplectic_j().transpose() * a;
        assert!((h - h.transpose()).amax() < 1e-12);
    }
}
