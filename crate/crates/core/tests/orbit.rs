use std::f64::consts::PI;
use std::sync::OnceLock;

use sbc_orbits::coords::{gamma_hat, sbc_momentum_target, RegState};
use sbc_orbits::dynamics::gamma_reduced;
use sbc_orbits::equalmass::*;
use sbc_orbits::integrate::Trajectory;
use sbc_orbits::orbitrep::{residual_l, symmetry_check};
use sbc_orbits::stability::*;
use sbc_orbits::symmetry::{check_initial_family, extend_orbit, scale_trajectory};
use sbc_orbits::Error;

fn eq() -> &'static EqualMassOrbit {
    static EQ: OnceLock<EqualMassOrbit> = OnceLock::new();
    EQ.get_or_init(|| EqualMassOrbit::compute(BASELINE_K).unwrap())
}

#[test]
fn shooting_residual_vanishes_at_reference_theta() {
    assert!(shoot_residual(2.57486992651942).unwrap().abs() < 1e-8);
    let (_, end) = shoot(eq().shooting.theta).unwrap();
    assert!(end.p[1].abs() < 1e-10);
    assert!((end.p[0] + 4.0 * 2f64.powf(0.25)).abs() < 1e-7, "{}", end.p[0]);
    let e = eq().shooting.energy_e;
    assert!(gamma_reduced(&end, e).unwrap().abs() < 1e-9);
}

#[test]
fn full_period_closes() {
    let o = &eq().orbit;
    let first = RegState::from_array(&o.states[0]);
    let last = RegState::from_array(o.last_state());
    assert_eq!(o.len(), 8 * BASELINE_K + 1);
    assert!(first.dist_inf(&last) < 1e-6);
    assert!((o.s[o.len() - 1] - eq().shooting.period()).abs() < 1e-9);
    // collisions at T/8, 3T/8, 5T/8, 7T/8 alternate between the clusters
    for k in 0..4 {
        let z = RegState::from_array(&o.states[(2 * k + 1) * BASELINE_K]);
        let (i, j) = if k % 2 == 0 { (0, 1) } else { (2, 3) };
        assert!(z.u[i].abs() < 1e-9 && z.u[j].abs() < 1e-9, "collision {k}");
    }
    assert!(eq().physical_period() > 0.0);
    assert!(check_initial_family(&first));
}

#[test]
fn segment_boundary_mismatch() {
    let seg = full_segment(&eq().shooting, 16).unwrap();
    let mut bad = seg.clone();
    let k = bad.len() - 1;
    bad.states[k][0] += 1e-2;
    assert!(matches!(extend_orbit(&bad), Err(Error::BoundaryMismatch(_))));
    assert!(extend_orbit(&Trajectory::default()).is_err());
}

#[test]
fn scaled_orbit_and_baseline() {
    let (tr, e) = eq().scaled();
    assert!((tr.s[tr.len() - 1] - 2.0 * PI).abs() < 1e-12);
    assert!((e + 2.818584789).abs() < 1e-6);
    let same = scale_trajectory(&eq().orbit, 1.0);
    assert_eq!(same.states, eq().orbit.states);
    let start = RegState::from_array(&tr.states[0]);
    assert!(gamma_hat(&start, 1.0, e).unwrap().abs() < 1e-9);

    let base = baseline_from(eq(), 24).unwrap();
    assert!(residual_l(&base).unwrap() < 1e-6);
    assert!(symmetry_check(&base));
    let z = base.eval(0.0);
    assert!(z.u[0] == 0.0 && z.u[1] == 0.0);
    assert!((base.collision_momentum() - 16.0).abs() < 1e-6);
    assert_eq!(sbc_momentum_target(1.0), 16.0);
    assert!(check_initial_family(&base.eval(-PI / 4.0)));
}

#[test]
fn m1_monodromy_structure() {
    let (tr, e) = eq().scaled();
    let start = RegState::from_array(&tr.states[0]);
    let x = monodromy(&start, 1.0, e, 2.0 * PI).unwrap();
    let rep = StabilityReport::from_monodromy(1.0, x, &ClassifyConfig::default()).unwrap();
    assert!(rep.symplectic_defect < 1e-6);
    assert!((rep.determinant - 1.0).abs() < 1e-6);
    assert!(rep.reciprocal_residual < 1e-5);
    // unit circle residence and the fourfold trivial multiplier
    assert!(rep.eigenvalues.iter().all(|z| (z.norm() - 1.0).abs() < 1e-4));
    assert_eq!(rep.eigenvalues.iter().filter(|z| (*z - 1.0).norm() < 1e-4).count(), 4);
    assert_eq!(rep.verdict, Verdict::LinearlyStable);
    // the monodromy does not depend on where the period starts, up to similarity
    let mid = RegState::from_array(&tr.states[tr.len() / 3]);
    let x2 = monodromy(&mid, 1.0, e, 2.0 * PI).unwrap();
    let e2 = sbc_orbits::eigen::eigenvalues8(&x2).unwrap();
    let far: Vec<_> = rep.eigenvalues.iter().copied().filter(|z| (*z - 1.0).norm() > 1e-2).collect();
    for z in far {
        assert!(e2.iter().any(|w| (w - z).norm() < 1e-7));
    }
}

#[test]
fn probe_on_stable_orbit() {
    let (tr, e) = eq().scaled();
    let start = RegState::from_array(&tr.states[0]);
    assert_eq!(divergence_probe(&start, 1.0, e, 2.0 * PI, 20, 100.0, 2000).unwrap(), None);
    assert_eq!(divergence_probe(&start, 1.0, e, 2.0 * PI, 20, 0.0, 2000).unwrap(), Some(0));
}
