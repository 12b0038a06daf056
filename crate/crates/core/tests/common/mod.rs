//! Shared property checks and strategies. Used by the property suites and
//! by the acceptance runner.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

use sbc_orbits::coords::{gamma_hat, phys_to_reg, reg_to_phys, PhysState, RegState};
use sbc_orbits::dynamics::{grad_gamma_hat, reduced_vf, vector_field, vector_field_slice, QPState};
use sbc_orbits::equalmass::{e_hat_from_reduced, mu, reduced_to_full};
use sbc_orbits::integrate::{integrate, IntegrationConfig, Trajectory};
use sbc_orbits::symmetry::SymmetryOp;

/// Seed of every randomized suite.
pub const SEED: u64 = 0x5bc0_4b0d_1e5;
pub const CASES: u32 = 256;

pub fn config() -> Config {
    Config {
        cases: CASES,
        rng_seed: RngSeed::Fixed(SEED),
        failure_persistence: None,
        max_global_rejects: 100_000,
        ..Config::default()
    }
}

pub fn runner() -> TestRunner {
    TestRunner::new(config())
}

fn a4(lo: f64, hi: f64) -> impl Strategy<Value = [f64; 4]> {
    [lo..hi, lo..hi, lo..hi, lo..hi]
}

/// Physical states with all inter-body distances bounded below.
pub fn phys_state() -> impl Strategy<Value = PhysState> {
    (a4(-3.0, 3.0), a4(-3.0, 3.0))
        .prop_map(|(x, w)| PhysState { x, w })
        .prop_filter("bodies too close", |p| {
            let d12 = (2.0 * p.x[0]).hypot(2.0 * p.x[1]);
            let d14 = (p.x[0] + p.x[2]).hypot(p.x[1] + p.x[3]);
            let d13 = (p.x[0] - p.x[2]).hypot(p.x[1] - p.x[3]);
            let d34 = (2.0 * p.x[2]).hypot(2.0 * p.x[3]);
            d12 > 0.05 && d14 > 0.05 && d13 > 0.05 && d34 > 0.05
        })
}

/// Regularized states away from every collision.
pub fn reg_state() -> impl Strategy<Value = RegState> {
    (a4(-1.2, 1.2), a4(-2.0, 2.0))
        .prop_map(|(u, v)| RegState { u, v })
        .prop_filter("near a collision", |r| {
            let u = r.u;
            let a = u[0] * u[0] + u[1] * u[1];
            let b = u[2] * u[2] + u[3] * u[3];
            let m = sbc_orbits::coords::mterms(&r.u, &r.v).m;
            a > 0.05 && b > 0.05 && m[4].hypot(m[5]) > 0.1 && m[6].hypot(m[7]) > 0.1
        })
}

pub fn mass() -> impl Strategy<Value = f64> {
    0.2..=1.0f64
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn check_phys_round_trip(p: &PhysState) -> Result<(), TestCaseError> {
    let r = phys_to_reg(p).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = reg_to_phys(&r).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for i in 0..4 {
        prop_assert!(close(back.x[i], p.x[i], 1e-12), "x[{i}]: {} vs {}", back.x[i], p.x[i]);
        prop_assert!(close(back.w[i], p.w[i], 1e-12), "w[{i}]: {} vs {}", back.w[i], p.w[i]);
    }
    Ok(())
}

/// reg -> phys -> reg reproduces the state up to the sign of each pair.
pub fn check_reg_round_trip(r: &RegState) -> Result<(), TestCaseError> {
    let p = reg_to_phys(r).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = phys_to_reg(&p).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for (i, j) in [(0, 1), (2, 3)] {
        let sg = if back.u[i] * r.u[i] + back.u[j] * r.u[j] >= 0.0 { 1.0 } else { -1.0 };
        for k in [i, j] {
            prop_assert!(close(back.u[k], sg * r.u[k], 1e-12), "u[{k}]");
            prop_assert!(close(back.v[k], sg * r.v[k], 1e-12), "v[{k}]");
        }
    }
    Ok(())
}

/// Analytic gradient against central differences of `Γ̂`.
pub fn check_gradient(r: &RegState, m: f64, e_hat: f64) -> Result<(), TestCaseError> {
    let g = grad_gamma_hat(r, m, e_hat).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let z = r.to_array();
    for i in 0..8 {
        let h = 1e-5 * z[i].abs().max(1.0);
        let mut zp = z;
        let mut zm = z;
        zp[i] += h;
        zm[i] -= h;
        let fp = gamma_hat(&RegState::from_array(&zp), m, e_hat).unwrap();
        let fm = gamma_hat(&RegState::from_array(&zm), m, e_hat).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        prop_assert!(close(g[i], fd, 1e-6), "component {i}: analytic {} fd {}", g[i], fd);
    }
    Ok(())
}

/// Integrator tolerance of the equivariance check and the allowed defect.
pub const EQUIV_TOL: f64 = 1e-11;
pub const EQUIV_SPAN: f64 = 0.1;

/// Smallest unregularized separation `min(|M5+iM6|, |M7+iM8|)`.
pub fn min_separation(z: &[f64]) -> f64 {
    let r = RegState::from_array(z);
    let m = sbc_orbits::coords::mterms(&r.u, &r.v).m;
    m[4].hypot(m[5]).min(m[6].hypot(m[7]))
}

/// Short arcs that stay clear of the unregularized collisions.
pub fn clear_arc(r: &RegState, m: f64, e_hat: f64, span: f64, tol: f64) -> Result<Trajectory, TestCaseError> {
    let mut field = |_s: f64, y: &[f64], out: &mut [f64]| vector_field_slice(y, out, m, e_hat);
    let tr = integrate(&mut field, &r.to_array(), (0.0, span), &IntegrationConfig::rkf45(tol))
        .map_err(|_| TestCaseError::reject("arc meets a singularity"))?;
    if tr.states.iter().any(|z| min_separation(z) < 0.1) {
        return Err(TestCaseError::reject("arc passes close to a collision"));
    }
    Ok(tr)
}

/// `Φ_{±s}(S r) = S Φ_s(r)` for every element of the group (minus sign
/// for the time-reversing ones).
pub fn check_equivariance(r: &RegState, m: f64, e_hat: f64) -> Result<(), TestCaseError> {
    let cfg = IntegrationConfig::rkf45(EQUIV_TOL);
    let mut field = |_s: f64, y: &[f64], out: &mut [f64]| vector_field_slice(y, out, m, e_hat);
    let base = clear_arc(r, m, e_hat, EQUIV_SPAN, EQUIV_TOL)?;
    let end = RegState::from_array(base.last_state());
    for op in SymmetryOp::group() {
        let span = if op.reverses_time() { -EQUIV_SPAN } else { EQUIV_SPAN };
        let img = integrate(&mut field, &op.apply(r).to_array(), (0.0, span), &cfg)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let got = RegState::from_array(img.last_state());
        let want = op.apply(&end);
        let scale = want.norm().max(1.0);
        let d = got.dist_inf(&want);
        prop_assert!(d <= 10.0 * EQUIV_TOL * scale, "{op:?}: defect {d:e}");
    }
    Ok(())
}

/// The reduced flow, embedded in the full chart at `m = 1`, is the full
/// flow in the time `s = μσ`.
pub fn check_embedding(qp: &QPState, e: f64) -> Result<(), TestCaseError> {
    let full = reduced_to_full(qp);
    let e_hat = e_hat_from_reduced(e);
    let f = vector_field(&full, 1.0, e_hat).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let g = reduced_vf(qp, e).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let lifted = reduced_to_full(&g);
    let mu = mu();
    let (fa, la) = (f.to_array(), lifted.to_array());
    for i in 0..8 {
        let res = (fa[i] - la[i] / mu).abs();
        prop_assert!(res <= 1e-8 * fa[i].abs().max(1.0), "component {i}: {} vs {}", fa[i], la[i] / mu);
    }
    Ok(())
}

pub fn qp_state() -> impl Strategy<Value = (QPState, f64)> {
    (0.2..1.5f64, 0.2..1.5f64, -4.0..4.0f64, -4.0..4.0f64, -4.0..0.5f64)
        .prop_map(|(q1, q2, p1, p2, e)| (QPState::new(q1, q2, p1, p2), e))
}

/// Runs `check` over `CASES` inputs drawn from `strategy` with the fixed
/// seed; returns the number of accepted cases.
pub fn run<S: Strategy>(
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    let mut runner = runner();
    let count = std::cell::Cell::new(0u32);
    runner
        .run(&strategy, |v| {
            check(v)?;
            count.set(count.get() + 1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(count.get())
}
