//! Coordinate charts of the pairwise symmetric four-body problem and the
//! Hamiltonians evaluated in them.
//!
//! Physical chart: positions `x` and momenta `w` of the bodies at `(x1,x2)`
//! (mass 1) and `(x3,x4)` (mass m); the other two bodies sit at the
//! negatives. Intermediate chart: `g`, `h`. Regularized chart: `u`, `v`,
//! in which both simultaneous binary collisions are regular.

use serde::{Deserialize, Serialize};

use crate::dual::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysState {
    pub x: [f64; 4],
    pub w: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntermediateState {
    pub g: [f64; 4],
    pub h: [f64; 4],
}

/// A point `(u1..u4, v1..v4)` of the regularized phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegState {
    pub u: [f64; 4],
    pub v: [f64; 4],
}

impl RegState {
    pub fn new(u: [f64; 4], v: [f64; 4]) -> Self {
        RegState { u, v }
    }

    pub fn from_array(z: &[f64]) -> Self {
        RegState {
            u: [z[0], z[1], z[2], z[3]],
            v: [z[4], z[5], z[6], z[7]],
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        let (u, v) = (self.u, self.v);
        [u[0], u[1], u[2], u[3], v[0], v[1], v[2], v[3]]
    }

    /// Max-norm distance to another state.
    pub fn dist_inf(&self, o: &RegState) -> f64 {
        let (a, b) = (self.to_array(), o.to_array());
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// True when both clusters are in collision (`u1=u2=0` or `u3=u4=0`).
    pub fn is_sbc(&self) -> bool {
        let (a, b) = cluster_norms(&self.u);
        a == 0.0 || b == 0.0
    }
}

/// The eight combinations `M1..M8` (index 0 holds `M1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MTerms<T> {
    pub m: [T; 8],
}

pub fn mterms<T: Scalar>(u: &[T; 4], v: &[T; 4]) -> MTerms<T> {
    let two = T::cst(2.0);
    MTerms {
        m: [
            v[0] * u[0] - v[1] * u[1],
            v[0] * u[1] + v[1] * u[0],
            v[2] * u[2] - v[3] * u[3],
            v[2] * u[3] + v[3] * u[2],
            u[0] * u[0] - u[1] * u[1] + u[2] * u[2] - u[3] * u[3],
            two * u[0] * u[1] + two * u[2] * u[3],
            u[0] * u[0] - u[1] * u[1] - u[2] * u[2] + u[3] * u[3],
            two * u[0] * u[1] - two * u[2] * u[3],
        ],
    }
}

/// `(u1^2+u2^2, u3^2+u4^2)`.
#[inline]
pub fn cluster_norms<T: Scalar>(u: &[T; 4]) -> (T, T) {
    (u[0] * u[0] + u[1] * u[1], u[2] * u[2] + u[3] * u[3])
}

pub fn validate_mass(m: f64) -> Result<()> {
    if m > 0.0 && m <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("mass ratio {m} outside (0, 1]")))
    }
}

pub fn phys_to_intermediate(p: &PhysState) -> IntermediateState {
    let (x, w) = (p.x, p.w);
    IntermediateState {
        g: [x[0] - x[2], x[1] - x[3], x[0] + x[2], x[1] + x[3]],
        h: [
            (w[0] - w[2]) / 2.0,
            (w[1] - w[3]) / 2.0,
            (w[0] + w[2]) / 2.0,
            (w[1] + w[3]) / 2.0,
        ],
    }
}

pub fn intermediate_to_phys(q: &IntermediateState) -> PhysState {
    let (g, h) = (q.g, q.h);
    PhysState {
        x: [
            (g[0] + g[2]) / 2.0,
            (g[1] + g[3]) / 2.0,
            (g[2] - g[0]) / 2.0,
            (g[3] - g[1]) / 2.0,
        ],
        w: [h[0] + h[2], h[1] + h[3], h[2] - h[0], h[3] - h[1]],
    }
}

/// Square root of one cluster pair `(g_a, g_b)` on the branch `u_a >= 0`.
/// The larger component comes from the half-angle formula, the other from
/// `g_b = 2 u_a u_b`, which avoids cancellation.
fn sqrt_pair(ga: f64, gb: f64) -> (f64, f64) {
    let r = ga.hypot(gb);
    if ga >= 0.0 {
        let ua = ((ga + r) / 2.0).sqrt();
        if ua > 0.0 {
            (ua, gb / (2.0 * ua))
        } else {
            (0.0, 0.0)
        }
    } else {
        let ub = ((r - ga) / 2.0).sqrt();
        let ub = if gb < 0.0 { -ub } else { ub };
        (gb / (2.0 * ub), ub)
    }
}

pub fn phys_to_reg(p: &PhysState) -> Result<RegState> {
    let q = phys_to_intermediate(p);
    let (g, h) = (q.g, q.h);
    if g[0] == 0.0 && g[1] == 0.0 {
        return Err(Error::DegenerateInput(
            "bodies 1 and 2 coincide (g1 = g2 = 0)".into(),
        ));
    }
    if g[2] == 0.0 && g[3] == 0.0 {
        return Err(Error::DegenerateInput(
            "bodies 1 and 4 coincide (g3 = g4 = 0)".into(),
        ));
    }
    let (u1, u2) = sqrt_pair(g[0], g[1]);
    let (u3, u4) = sqrt_pair(g[2], g[3]);
    Ok(RegState {
        u: [u1, u2, u3, u4],
        v: [
            2.0 * (h[0] * u1 + h[1] * u2),
            2.0 * (-h[0] * u2 + h[1] * u1),
            2.0 * (h[2] * u3 + h[3] * u4),
            2.0 * (-h[2] * u4 + h[3] * u3),
        ],
    })
}

/// Physical positions of a regularized state; defined everywhere,
/// including at simultaneous binary collisions.
pub fn reg_positions(r: &RegState) -> [f64; 4] {
    let u = r.u;
    let g = [
        u[0] * u[0] - u[1] * u[1],
        2.0 * u[0] * u[1],
        u[2] * u[2] - u[3] * u[3],
        2.0 * u[2] * u[3],
    ];
    [
        (g[0] + g[2]) / 2.0,
        (g[1] + g[3]) / 2.0,
        (g[2] - g[0]) / 2.0,
        (g[3] - g[1]) / 2.0,
    ]
}

pub fn reg_to_phys(r: &RegState) -> Result<PhysState> {
    let (u, v) = (r.u, r.v);
    let (a, b) = cluster_norms(&u);
    if a == 0.0 || b == 0.0 {
        return Err(Error::SbcPoint);
    }
    let g = [
        u[0] * u[0] - u[1] * u[1],
        2.0 * u[0] * u[1],
        u[2] * u[2] - u[3] * u[3],
        2.0 * u[2] * u[3],
    ];
    let h = [
        (v[0] * u[0] - v[1] * u[1]) / (2.0 * a),
        (v[0] * u[1] + v[1] * u[0]) / (2.0 * a),
        (v[2] * u[2] - v[3] * u[3]) / (2.0 * b),
        (v[2] * u[3] + v[3] * u[2]) / (2.0 * b),
    ];
    Ok(intermediate_to_phys(&IntermediateState { g, h }))
}

pub fn kinetic_phys(p: &PhysState, m: f64) -> f64 {
    let w = p.w;
    (w[0] * w[0] + w[1] * w[1]) / 4.0 + (w[2] * w[2] + w[3] * w[3]) / (4.0 * m)
}

pub fn potential_phys(p: &PhysState, m: f64) -> Result<f64> {
    let x = p.x;
    let d1 = x[0].hypot(x[1]);
    let d2 = x[2].hypot(x[3]);
    let d12 = (x[2] - x[0]).hypot(x[3] - x[1]);
    let d14 = (x[0] + x[2]).hypot(x[1] + x[3]);
    if d1 == 0.0 || d2 == 0.0 || d12 == 0.0 || d14 == 0.0 {
        return Err(Error::DegenerateInput("collision configuration".into()));
    }
    Ok(1.0 / (2.0 * d1) + 2.0 * m / d12 + 2.0 * m / d14 + m * m / (2.0 * d2))
}

/// `H = K - U` in the physical chart.
pub fn hamiltonian_phys(p: &PhysState, m: f64) -> Result<f64> {
    Ok(kinetic_phys(p, m) - potential_phys(p, m)?)
}

/// `Ĥ = K̂ - Û`, the Hamiltonian written in the regularized chart
/// (singular at simultaneous binary collisions).
pub fn hamiltonian_reg(r: &RegState, m: f64) -> Result<f64> {
    let (u, v) = (r.u, r.v);
    let (a, b) = cluster_norms(&u);
    if a == 0.0 || b == 0.0 {
        return Err(Error::SbcPoint);
    }
    let mt = mterms(&u, &v).m;
    let (s56, s78) = singular_radii(&mt)?;
    let va = v[0] * v[0] + v[1] * v[1];
    let vb = v[2] * v[2] + v[3] * v[3];
    let k = (1.0 + 1.0 / m) / 16.0 * (va * b + vb * a) / (a * b)
        + (1.0 - 1.0 / m) / 8.0 * (mt[2] * mt[0] + mt[3] * mt[1]) / (a * b);
    let pot = 1.0 / s56 + 2.0 * m / a + 2.0 * m / b + m * m / s78;
    Ok(k - pot)
}

/// `sqrt(M5^2+M6^2)` and `sqrt(M7^2+M8^2)`; zero values are the
/// unregularized collisions.
fn singular_radii<T: Scalar>(mt: &[T; 8]) -> Result<(T, T)> {
    let r56 = mt[4] * mt[4] + mt[5] * mt[5];
    let r78 = mt[6] * mt[6] + mt[7] * mt[7];
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
    Ok((r56.sqrt(), r78.sqrt()))
}

/// The extended-phase-space Hamiltonian `Γ̂ = (dt/ds)(Ĥ - Ê)`.
pub fn gamma_hat(r: &RegState, m: f64, e_hat: f64) -> Result<f64> {
    gamma_hat_generic(&r.u, &r.v, m, e_hat)
}

pub(crate) fn gamma_hat_generic<T: Scalar>(u: &[T; 4], v: &[T; 4], m: f64, e_hat: f64) -> Result<f64> {
    let (a, b) = cluster_norms(u);
    let mt = mterms(u, v).m;
    let (s56, s78) = singular_radii(&mt)?;
    let va = v[0] * v[0] + v[1] * v[1];
    let vb = v[2] * v[2] + v[3] * v[3];
    let ab = a * b;
    let val = T::cst((1.0 + 1.0 / m) / 16.0) * (va * b + vb * a)
        + T::cst((1.0 - 1.0 / m) / 8.0) * (mt[2] * mt[0] + mt[3] * mt[1])
        - ab / s56
        - T::cst(2.0 * m) * (a + b)
        - T::cst(m * m) * ab / s78
        - T::cst(e_hat) * ab;
    Ok(val.re())
}

pub fn angular_momentum_phys(p: &PhysState) -> f64 {
    let (x, w) = (p.x, p.w);
    x[0] * w[1] - x[1] * w[0] + x[2] * w[3] - x[3] * w[2]
}

/// Angular momentum in the regularized chart.
pub fn angular_momentum_reg(r: &RegState) -> f64 {
    let (u, v) = (r.u, r.v);
    0.5 * (-v[0] * u[1] + v[1] * u[0] - v[2] * u[3] + v[3] * u[2])
}

/// Value of `v1^2+v2^2` forced at a collision `u1=u2=0` on `Γ̂ = 0`.
pub fn sbc_momentum_target(m: f64) -> f64 {
    32.0 * m * m / (m + 1.0)
}
