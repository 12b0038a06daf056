//! The D4 symmetry of the regularized flow, orbit extension from a
//! fundamental segment, and the energy scaling of periodic orbits.

use crate::coords::RegState;
use crate::dynamics::Mat8;
use crate::error::{Error, Result};
use crate::integrate::Trajectory;

/// The group element `S_F^k S_G^r` (`r` = `reflect`). `S_F` preserves the
/// direction of time, `S_G` reverses it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymmetryOp {
    pub f_power: u8,
    pub reflect: bool,
}

impl SymmetryOp {
    pub const IDENTITY: SymmetryOp = SymmetryOp { f_power: 0, reflect: false };
    pub const SF: SymmetryOp = SymmetryOp { f_power: 1, reflect: false };
    pub const SG: SymmetryOp = SymmetryOp { f_power: 0, reflect: true };

    /// All eight elements.
    pub fn group() -> Vec<SymmetryOp> {
        (0..4)
            .flat_map(|k| [false, true].map(|reflect| SymmetryOp { f_power: k, reflect }))
            .collect()
    }

    pub fn reverses_time(&self) -> bool {
        self.reflect
    }

    pub fn matrix(&self) -> Mat8 {
        let mut m = Mat8::identity();
        if self.reflect {
            m = sg_matrix();
        }
        for _ in 0..self.f_power % 4 {
            m = sf_matrix() * m;
        }
        m
    }

    pub fn apply(&self, r: &RegState) -> RegState {
        let mut z = *r;
        if self.reflect {
            z = apply_sg(&z);
        }
        for _ in 0..self.f_power % 4 {
            z = apply_sf(&z);
        }
        z
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &SymmetryOp) -> SymmetryOp {
        // S_G S_F = S_F^{-1} S_G
        let k_self = self.f_power as i32;
        let k_other = other.f_power as i32;
        let f = if self.reflect { k_self - k_other } else { k_self + k_other };
        SymmetryOp {
            f_power: f.rem_euclid(4) as u8,
            reflect: self.reflect != other.reflect,
        }
    }
}

fn apply_sf(r: &RegState) -> RegState {
    let (u, v) = (r.u, r.v);
    RegState {
        u: [-u[2], u[3], u[0], -u[1]],
        v: [-v[2], v[3], v[0], -v[1]],
    }
}

fn apply_sg(r: &RegState) -> RegState {
    let (u, v) = (r.u, r.v);
    RegState {
        u: [-u[0], -u[1], u[2], u[3]],
        v: [v[0], v[1], -v[2], -v[3]],
    }
}

pub fn sf_matrix() -> Mat8 {
    let mut m = Mat8::zeros();
    for off in [0, 4] {
        m[(off, off + 2)] = -1.0;
        m[(off + 1, off + 3)] = 1.0;
        m[(off + 2, off)] = 1.0;
        m[(off + 3, off + 1)] = -1.0;
    }
    m
}

pub fn sg_matrix() -> Mat8 {
    Mat8::from_diagonal(&nalgebra::SVector::<f64, 8>::from_row_slice(&[
        -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0,
    ]))
}

pub fn apply_symmetry(op: SymmetryOp, r: &RegState) -> RegState {
    op.apply(r)
}

fn neg(r: &RegState) -> RegState {
    RegState {
        u: r.u.map(|x| -x),
        v: r.v.map(|x| -x),
    }
}

/// Tolerance for the boundary patterns of a fundamental segment.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// Extends a segment sampled on a uniform grid over `[0, s0]` to the full
/// period `[0, 8 s0]` by `γ(2s0-s) = S_G γ(s)`, `γ(s+2s0) = S_F γ(s)`,
/// `γ(s+4s0) = -γ(s)`. The segment must start on the symmetric initial
/// pattern and end at a collision `u1=u2=v3=v4=0`.
pub fn extend_orbit(segment: &Trajectory) -> Result<Trajectory> {
    let k = segment.len().checked_sub(1).filter(|&k| k > 0).ok_or_else(|| {
        Error::BoundaryMismatch("segment needs at least two samples".into())
    })?;
    let h = segment.s[1] - segment.s[0];
    for (i, s) in segment.s.iter().enumerate() {
        let expect = segment.s[0] + i as f64 * h;
        if (s - expect).abs() > 1e-9 * h.abs().max(1.0) * (k as f64) {
            return Err(Error::BoundaryMismatch("segment grid is not uniform".into()));
        }
    }
    let start = RegState::from_array(&segment.states[0]);
    let end = RegState::from_array(&segment.states[k]);
    let end_defect = [end.u[0], end.u[1], end.v[2], end.v[3]]
        .iter()
        .fold(0.0f64, |a, x| a.max(x.abs()));
    if end_defect > BOUNDARY_TOL {
        return Err(Error::BoundaryMismatch(format!(
            "segment end is {end_defect:.3e} away from a collision u1=u2=v3=v4=0"
        )));
    }
    let start_defect = [1.0, -1.0]
        .iter()
        .map(|sg| {
            let (u, v) = (start.u, start.v);
            [
                u[2] - sg * u[0],
                u[3] + sg * u[1],
                v[2] + sg * v[0],
                v[3] - sg * v[1],
            ]
            .iter()
            .fold(0.0f64, |a, x| a.max(x.abs()))
        })
        .fold(f64::INFINITY, f64::min);
    if start_defect > BOUNDARY_TOL {
        return Err(Error::BoundaryMismatch(format!(
            "segment start is {start_defect:.3e} away from the symmetric initial pattern"
        )));
    }

    let st: Vec<RegState> = segment.states.iter().map(|z| RegState::from_array(z)).collect();
    let s0 = segment.s[0];
    let has_t = segment.t.len() == segment.len();
    let mut out = Trajectory::default();
    let push = |out: &mut Trajectory, i: usize, r: RegState, t: f64| {
        out.s.push(s0 + i as f64 * h);
        out.states.push(r.to_array().to_vec());
        if has_t {
            out.t.push(t);
        }
    };
    let tv = |i: usize| if has_t { segment.t[i] } else { 0.0 };
    for i in 0..=k {
        push(&mut out, i, st[i], tv(i));
    }
    for j in 1..=k {
        let t = 2.0 * tv(k) - tv(k - j);
        push(&mut out, k + j, apply_sg(&st[k - j]), t);
    }
    let snapshot: Vec<(RegState, f64)> = (0..=2 * k)
        .map(|i| (RegState::from_array(&out.states[i]), if has_t { out.t[i] } else { 0.0 }))
        .collect();
    let t2 = snapshot[2 * k].1;
    for i in 1..=2 * k {
        push(&mut out, 2 * k + i, apply_sf(&snapshot[i].0), t2 + snapshot[i].1);
    }
    let t4 = if has_t { out.t[4 * k] } else { 0.0 };
    for i in 1..=4 * k {
        let r = RegState::from_array(&out.states[i]);
        let t = if has_t { t4 + out.t[i] } else { 0.0 };
        push(&mut out, 4 * k + i, neg(&r), t);
    }
    Ok(out)
}

/// `(u, v) -> (ε u, v)`.
pub fn scale_state(r: &RegState, eps: f64) -> RegState {
    RegState {
        u: r.u.map(|x| eps * x),
        v: r.v,
    }
}

/// Energy of the scaled orbit, `ε^-2 Ê`.
pub fn scale_energy(e_hat: f64, eps: f64) -> f64 {
    e_hat / (eps * eps)
}

/// `γ_ε(s) = (ε u(εs), v(εs))`; physical time scales by `ε^3`.
pub fn scale_trajectory(traj: &Trajectory, eps: f64) -> Trajectory {
    Trajectory {
        s: traj.s.iter().map(|s| s / eps).collect(),
        states: traj
            .states
            .iter()
            .map(|z| scale_state(&RegState::from_array(z), eps).to_array().to_vec())
            .collect(),
        t: traj.t.iter().map(|t| t * eps.powi(3)).collect(),
    }
}

/// Tolerance of the initial-family predicate.
pub const INITIAL_FAMILY_TOL: f64 = 1e-9;

/// Whether `r` is the regularized image of a symmetric initial condition
/// `x2 = x3 = 0`, `w1 = w4 = 0`, `0 < x4 <= x1`, `0 < w2 <= w3`.
pub fn check_initial_family(r: &RegState) -> bool {
    let (u, v) = (r.u, r.v);
    let tol = INITIAL_FAMILY_TOL;
    let k = std::f64::consts::SQRT_2 - 1.0;
    if !(u[0] * u[1] < 0.0) || u[1].abs() > k * u[0].abs() + tol {
        return false;
    }
    let mixed = v[0] * u[1] + v[1] * u[0];
    if !(mixed > 0.0) || mixed > v[1] * u[1] - v[0] * u[0] + tol {
        return false;
    }
    [1.0, -1.0].iter().any(|sg| {
        (u[2] - sg * u[0]).abs() <= tol
            && (u[3] + sg * u[1]).abs() <= tol
            && (v[2] + sg * v[0]).abs() <= tol
            && (v[3] - sg * v[1]).abs() <= tol
    })
}
