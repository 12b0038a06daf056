//! The equal-mass (`m = 1`) orbit: shooting in the reduced system, the
//! embedding into the full chart, and the seed orbit for continuation.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::coords::RegState;
use crate::dynamics::{reduced_vf, time_rate, QPState};
use crate::error::{Error, Result};
use crate::integrate::{integrate_with_time, locate_event, Direction, IntegrationConfig, Trajectory};
use crate::orbitrep::TrigOrbit;
use crate::symmetry::{extend_orbit, scale_energy, scale_trajectory};

/// Multiplier of the linear symplectic scaling between the reduced and
/// the full chart, `s = μσ`.
pub fn mu() -> f64 {
    1.0 / (2f64.powf(1.25) * (SQRT_2 - 1.0).sqrt())
}

/// Reduced energy on `Γ = 0` for the start `(1, 1, -ϑ, ϑ)`.
pub fn energy_from_theta(theta: f64) -> f64 {
    (theta * theta - 16.0 * SQRT_2 - 8.0) / 8.0
}

/// Energy `Ê` of the full system for reduced energy `E`.
pub fn e_hat_from_reduced(e: f64) -> f64 {
    2.0 * e / (4.0 - 2.0 * SQRT_2)
}

pub fn initial_qp(theta: f64) -> QPState {
    QPState::new(1.0, 1.0, -theta, theta)
}

/// Embeds a reduced state in the full chart.
pub fn reduced_to_full(qp: &QPState) -> RegState {
    let k = SQRT_2 - 1.0;
    let uq = 2f64.powf(-0.25);
    let vp = 1.0 / (2.0 * k.sqrt());
    let (u1, u3) = (qp.q[0] * uq, qp.q[1] * uq);
    let (v1, v3) = (qp.p[0] * vp, qp.p[1] * vp);
    RegState {
        u: [u1, -k * u1, u3, k * u3],
        v: [v1, -k * v1, v3, k * v3],
    }
}

/// Horizon for the first crossing of `Q1 = 0`.
pub const SIGMA_MAX: f64 = 10.0;
/// Integration tolerance of the shooting runs.
pub const SHOOT_TOL: f64 = 1e-13;
pub const THETA_BRACKET: (f64, f64) = (2.0, 3.0);

fn reduced_field(e: f64) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> {
    move |_s, y, out| {
        let f = reduced_vf(&QPState::from_array(y), e)?;
        out.copy_from_slice(&f.to_array());
        Ok(())
    }
}

/// Integrates from `(1, 1, -ϑ, ϑ)` to the first downward zero of `Q1`.
pub fn shoot(theta: f64) -> Result<(f64, QPState)> {
    let e = energy_from_theta(theta);
    let mut field = reduced_field(e);
    let cfg = IntegrationConfig::rkf45(SHOOT_TOL);
    let (sigma, y) = locate_event(
        &mut field,
        &initial_qp(theta).to_array(),
        (0.0, SIGMA_MAX),
        &cfg,
        &|y| y[0],
        Direction::Falling,
    )?;
    Ok((sigma, QPState::from_array(&y)))
}

/// `P2` at the first collision; zero for the periodic orbit.
pub fn shoot_residual(theta: f64) -> Result<f64> {
    Ok(shoot(theta)?.1.p[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub theta: f64,
    pub sigma0: f64,
    pub energy_e: f64,
    pub endpoint: QPState,
    pub full_s0: f64,
}

impl ShootingResult {
    pub fn e_hat(&self) -> f64 {
        e_hat_from_reduced(self.energy_e)
    }

    /// Period `T = 8 s0` of the full orbit.
    pub fn period(&self) -> f64 {
        8.0 * self.full_s0
    }

    /// Scale factor that brings the period to `2π`.
    pub fn eps_2pi(&self) -> f64 {
        self.period() / (2.0 * PI)
    }
}

/// Solves `P2(σ0; ϑ) = 0` by bisection on the bracket followed by secant
/// polishing.
pub fn solve_equal_mass() -> Result<ShootingResult> {
    let (mut lo, mut hi) = THETA_BRACKET;
    let mut flo = shoot_residual(lo)?;
    let fhi = shoot_residual(hi)?;
    if flo * fhi > 0.0 {
        return Err(Error::BracketFailure { lo, hi });
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        let fm = shoot_residual(mid)?;
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let (mut x0, mut x1) = (lo, hi);
    let (mut f0, mut f1) = (shoot_residual(x0)?, shoot_residual(x1)?);
    for _ in 0..50 {
        if f1 == f0 || f1 == 0.0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(x2 > THETA_BRACKET.0 && x2 < THETA_BRACKET.1) {
            break;
        }
        let f2 = shoot_residual(x2)?;
        let done = (x2 - x1).abs() < 1e-15 * x2.abs();
        (x0, f0, x1, f1) = (x1, f1, x2, f2);
        if done || f1.abs() < 1e-14 {
            break;
        }
    }
    let theta = if f1.abs() <= f0.abs() { x1 } else { x0 };
    let (sigma0, endpoint) = shoot(theta)?;
    Ok(ShootingResult {
        theta,
        sigma0,
        energy_e: energy_from_theta(theta),
        endpoint,
        full_s0: mu() * sigma0,
    })
}

/// Sub-steps of RK4 per output interval when sampling segments.
const SEGMENT_SUBSTEPS: usize = 32;

/// Samples the full-chart orbit on `[0, s0]` at `k + 1` uniform nodes,
/// with physical time.
pub fn full_segment(res: &ShootingResult, k: usize) -> Result<Trajectory> {
    let mut field = reduced_field(res.energy_e);
    let mu = mu();
    let rate = move |y: &[f64]| mu * time_rate(&reduced_to_full(&QPState::from_array(y)));
    let cfg = IntegrationConfig::rk4(res.sigma0 / (k * SEGMENT_SUBSTEPS) as f64);
    let tr = integrate_with_time(&mut field, &rate, &initial_qp(res.theta).to_array(), (0.0, res.sigma0), &cfg)?;
    let mut out = Trajectory::default();
    for i in (0..tr.len()).step_by(SEGMENT_SUBSTEPS) {
        out.s.push(i as f64 / SEGMENT_SUBSTEPS as f64 * res.full_s0 / k as f64);
        out.states.push(reduced_to_full(&QPState::from_array(&tr.states[i])).to_array().to_vec());
        out.t.push(tr.t[i]);
    }
    Ok(out)
}

/// The equal-mass periodic orbit over one full period.
#[derive(Debug, Clone)]
pub struct EqualMassOrbit {
    pub shooting: ShootingResult,
    /// Samples over `[0, T]`, `8k + 1` uniform nodes, unscaled.
    pub orbit: Trajectory,
}

impl EqualMassOrbit {
    pub fn compute(k: usize) -> Result<Self> {
        let shooting = solve_equal_mass()?;
        Self::from_shooting(shooting, k)
    }

    pub fn from_shooting(shooting: ShootingResult, k: usize) -> Result<Self> {
        let seg = full_segment(&shooting, k)?;
        let orbit = extend_orbit(&seg)?;
        Ok(EqualMassOrbit { shooting, orbit })
    }

    pub fn initial_state(&self) -> RegState {
        RegState::from_array(&self.orbit.states[0])
    }

    /// Physical period `R` (time between returns of the physical state).
    pub fn physical_period(&self) -> f64 {
        self.orbit.t[self.orbit.len() - 1] / 2.0
    }

    /// The orbit rescaled to period `2π`.
    pub fn scaled(&self) -> (Trajectory, f64) {
        let eps = self.shooting.eps_2pi();
        (scale_trajectory(&self.orbit, eps), scale_energy(self.shooting.e_hat(), eps))
    }

    /// Samples of the period-`2π` orbit on `s_j = 2πj/(8k)`, shifted so that
    /// `s = 0` is the first collision.
    pub fn collision_frame_samples(&self) -> Vec<RegState> {
        let (tr, _) = self.scaled();
        let total = tr.len() - 1;
        let k = total / 8;
        (0..total)
            .map(|j| RegState::from_array(&tr.states[(j + k) % total]))
            .collect()
    }
}

/// Sampling density of the baseline projection: `8 * 128 = 1024` nodes.
pub const BASELINE_K: usize = 128;

/// The `m = 1` orbit at period `2π` as a trigonometric polynomial with
/// `n_terms` terms.
pub fn baseline_orbit(n_terms: usize) -> Result<TrigOrbit> {
    let eq = EqualMassOrbit::compute(BASELINE_K)?;
    baseline_from(&eq, n_terms)
}

pub fn baseline_from(eq: &EqualMassOrbit, n_terms: usize) -> Result<TrigOrbit> {
    let (_, e) = eq.scaled();
    TrigOrbit::project(&eq.collision_frame_samples(), n_terms, 1.0, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_value() {
        assert!((mu() - 0.653281482438188).abs() < 1e-14);
    }

    #[test]
    fn embedding_of_start() {
        let th = 2.57486992651942;
        let r = reduced_to_full(&initial_qp(th));
        let q = 2f64.powf(-0.25);
        let k = SQRT_2 - 1.0;
        assert!((r.u[0] - q).abs() < 1e-15 && (r.u[2] - q).abs() < 1e-15);
        assert!((r.u[1] + k * q).abs() < 1e-15 && (r.u[3] - k * q).abs() < 1e-15);
        assert!((r.v[0] + 2.000382939).abs() < 1e-9);
        assert!((r.v[1] - 0.8285857433).abs() < 1e-9);
        let z = reduced_to_full(&QPState::new(0.0, 1.1, -4.7, 0.0));
        assert_eq!((z.u[0], z.u[1]), (0.0, 0.0));
    }

    #[test]
    fn energy_chain_identity() {
        for e in [-3.0, -2.5, -1.0, -0.1, 0.7] {
            let direct = e * 2.0 / (4.0 - 2.0 * SQRT_2);
            assert!((e_hat_from_reduced(e) - direct).abs() < 1e-14);
        }
        assert!((e_hat_from_reduced(-2.999682732) + 5.120778733).abs() < 1e-7);
    }

    #[test]
    fn bracket_signs() {
        assert!(shoot_residual(2.0).unwrap() < 0.0);
        assert!(shoot_residual(3.0).unwrap() > 0.0);
    }
}
