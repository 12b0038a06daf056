//! Fixed-step RK4, adaptive Runge-Kutta-Fehlberg 4(5), event location and
//! variational (monodromy) integration.

use crate::dynamics::Mat8;
use crate::error::{Error, Result};

/// A right-hand side `f(s, y, out)`.
pub type Field<'a> = dyn FnMut(f64, &[f64], &mut [f64]) -> Result<()> + 'a;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with (at most) step `h`; the span
    /// is divided into equal steps.
    Rk4 { h: f64 },
    /// Fehlberg 4(5) pair with error control on the scaled max-norm.
    Rkf45 { abs_tol: f64, rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    pub method: Method,
    pub max_steps: usize,
}

impl IntegrationConfig {
    pub fn rk4(h: f64) -> Self {
        IntegrationConfig {
            method: Method::Rk4 { h },
            max_steps: 50_000_000,
        }
    }

    pub fn rkf45(tol: f64) -> Self {
        IntegrationConfig {
            method: Method::Rkf45 {
                abs_tol: tol,
                rel_tol: tol,
            },
            max_steps: 10_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.method {
            Method::Rk4 { h } if !(h > 0.0) => Err(Error::InvalidParameter(format!("RK4 step {h}"))),
            Method::Rkf45 { abs_tol, rel_tol } if !(abs_tol > 0.0 && rel_tol > 0.0) => Err(
                Error::InvalidParameter(format!("RKF45 tolerances {abs_tol}, {rel_tol}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Samples at every accepted step. `t` holds the accumulated physical time
/// when a time rate was supplied, and is empty otherwise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub s: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub t: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

// Fehlberg tableau.
const C: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];
const A: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];

struct Stepper {
    k: [Vec<f64>; 6],
    tmp: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Stepper {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    fn eval(f: &mut Field, s: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        f(s, y, out).map_err(|e| match e {
            Error::DegenerateInput(reason) => Error::SingularityHit { s, reason },
            other => other,
        })
    }

    fn rk4(&mut self, f: &mut Field, s: f64, y: &[f64], h: f64, out: &mut [f64]) -> Result<()> {
        let n = y.len();
        let [k1, k2, k3, k4, _, _] = &mut self.k;
        let tmp = &mut self.tmp;
        Self::eval(f, s, y, k1)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        Self::eval(f, s + 0.5 * h, tmp, k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        Self::eval(f, s + 0.5 * h, tmp, k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        Self::eval(f, s + h, tmp, k4)?;
        for i in 0..n {
            out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        Ok(())
    }

    /// One Fehlberg step; `out` receives the fifth-order solution and the
    /// return value is the scaled error over the first `ctrl` components.
    #[allow(clippy::too_many_arguments)]
    fn rkf45(
        &mut self,
        f: &mut Field,
        s: f64,
        y: &[f64],
        h: f64,
        out: &mut [f64],
        ctrl: usize,
        abs_tol: f64,
        rel_tol: f64,
    ) -> Result<f64> {
        let n = y.len();
        for stage in 0..6 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in A[stage].iter().enumerate().take(stage) {
                    acc += h * a * self.k[j][i];
                }
                self.tmp[i] = acc;
            }
            let (tmp, k) = (&self.tmp, &mut self.k[stage]);
            Self::eval(f, s + C[stage] * h, tmp, k)?;
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut y5 = y[i];
            let mut e = 0.0;
            for j in 0..6 {
                y5 += h * B5[j] * self.k[j][i];
                e += h * (B5[j] - B4[j]) * self.k[j][i];
            }
            out[i] = y5;
            if i < ctrl {
                let sc = abs_tol + rel_tol * y[i].abs().max(y5.abs());
                err = err.max(e.abs() / sc);
            }
        }
        Ok(err)
    }

    /// Single step of the configured method, error ignored.
    fn step(&mut self, method: Method, f: &mut Field, s: f64, y: &[f64], h: f64, out: &mut [f64]) -> Result<()> {
        match method {
            Method::Rk4 { .. } => self.rk4(f, s, y, h, out),
            Method::Rkf45 { abs_tol, rel_tol } => self.rkf45(f, s, y, h, out, 0, abs_tol, rel_tol).map(|_| ()),
        }
    }
}

/// Integrates from `span.0` to `span.1` (either direction), calling
/// `observe(s, y)` at the start and after every accepted step. Stops early
/// when `observe` returns `false`. Error control uses the first `ctrl`
/// components. Returns the final `(s, y)`.
pub fn drive(
    field: &mut Field,
    state0: &[f64],
    span: (f64, f64),
    cfg: &IntegrationConfig,
    ctrl: usize,
    observe: &mut dyn FnMut(f64, &[f64]) -> bool,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    let n = state0.len();
    let (s0, s1) = span;
    let mut st = Stepper::new(n);
    let mut y = state0.to_vec();
    let mut next = vec![0.0; n];
    let mut s = s0;
    if !observe(s, &y) || s1 == s0 {
        return Ok((s, y));
    }
    let dir = (s1 - s0).signum();
    let len = (s1 - s0).abs();
    match cfg.method {
        Method::Rk4 { h } => {
            let steps = (len / h - 1e-9).ceil().max(1.0) as usize;
            if steps > cfg.max_steps {
                return Err(Error::StepLimit(cfg.max_steps));
            }
            let hh = (s1 - s0) / steps as f64;
            for k in 0..steps {
                st.rk4(field, s, &y, hh, &mut next)?;
                std::mem::swap(&mut y, &mut next);
                s = if k + 1 == steps { s1 } else { s0 + (k + 1) as f64 * hh };
                if !observe(s, &y) {
                    break;
                }
            }
        }
        Method::Rkf45 { abs_tol, rel_tol } => {
            let mut h = dir * len.min(1e-2);
            let mut taken = 0usize;
            while (s1 - s) * dir > 0.0 {
                if taken >= cfg.max_steps {
                    return Err(Error::StepLimit(cfg.max_steps));
                }
                taken += 1;
                let remaining = s1 - s;
                let last = h.abs() >= remaining.abs();
                let hs = if last { remaining } else { h };
                let err = st.rkf45(field, s, &y, hs, &mut next, ctrl, abs_tol, rel_tol)?;
                if !err.is_finite() {
                    h *= 0.2;
                } else {
                    if err <= 1.0 {
                        std::mem::swap(&mut y, &mut next);
                        s = if last { s1 } else { s + hs };
                        if !observe(s, &y) {
                            break;
                        }
                    }
                    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    h = hs * fac;
                }
                if h.abs() < 1e-14 * s.abs().max(1.0) {
                    return Err(Error::StepUnderflow(s));
                }
            }
        }
    }
    Ok((s, y))
}

/// Integrates and records every accepted step.
pub fn integrate(field: &mut Field, state0: &[f64], span: (f64, f64), cfg: &IntegrationConfig) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    drive(field, state0, span, cfg, state0.len(), &mut |s, y| {
        traj.s.push(s);
        traj.states.push(y.to_vec());
        true
    })?;
    Ok(traj)
}

/// Integrates together with the quadrature `t' = rate(y)`, `t(s0) = 0`.
pub fn integrate_with_time(
    field: &mut Field,
    rate: &dyn Fn(&[f64]) -> f64,
    state0: &[f64],
    span: (f64, f64),
    cfg: &IntegrationConfig,
) -> Result<Trajectory> {
    let n = state0.len();
    let mut aug = |s: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        field(s, &y[..n], &mut out[..n])?;
        out[n] = rate(&y[..n]);
        Ok(())
    };
    let mut y0 = state0.to_vec();
    y0.push(0.0);
    let mut traj = Trajectory::default();
    drive(&mut aug, &y0, span, cfg, n, &mut |s, y| {
        traj.s.push(s);
        traj.states.push(y[..n].to_vec());
        traj.t.push(y[n]);
        true
    })?;
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

/// Finds the first crossing of `event(y) = 0` in the given direction on
/// `(s0, s_max]`. The crossing step is refined by bisection, re-integrating
/// the partial step from the start of the bracketing step.
pub fn locate_event(
    field: &mut Field,
    state0: &[f64],
    span: (f64, f64),
    cfg: &IntegrationConfig,
    event: &dyn Fn(&[f64]) -> f64,
    direction: Direction,
) -> Result<(f64, Vec<f64>)> {
    let e0 = event(state0);
    if e0 == 0.0 {
        return Ok((span.0, state0.to_vec()));
    }
    let crosses = |a: f64, b: f64| match direction {
        Direction::Rising => a < 0.0 && b >= 0.0,
        Direction::Falling => a > 0.0 && b <= 0.0,
        Direction::Either => (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0),
    };
    let mut prev: Option<(f64, Vec<f64>, f64)> = None;
    let mut bracket: Option<(f64, Vec<f64>, f64, f64)> = None;
    drive(field, state0, span, cfg, state0.len(), &mut |s, y| {
        let e = event(y);
        if let Some((sp, yp, ep)) = &prev {
            if crosses(*ep, e) {
                bracket = Some((*sp, yp.clone(), *ep, s));
                return false;
            }
        }
        prev = Some((s, y.to_vec(), e));
        true
    })?;
    let (sa, ya, ea, sb) = bracket.ok_or(Error::NoEvent(span.1))?;

    let mut st = Stepper::new(ya.len());
    let mut y = vec![0.0; ya.len()];
    let (mut lo, mut hi) = (0.0, sb - sa);
    let mut best = (sb, f64::INFINITY, Vec::new());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        st.step(cfg.method, field, sa, &ya, mid, &mut y)?;
        let e = event(&y);
        if e.abs() < best.1 {
            best = (sa + mid, e.abs(), y.clone());
        }
        if e == 0.0 {
            break;
        }
        if (e > 0.0) == (ea > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((best.0, best.2))
}

/// Integrates `y' = f(y)` together with `X' = A(y) X`, `X(s0) = I`, on the
/// same steps; error control (for RKF45) only sees `y`.
pub fn integrate_variational(
    field: &mut Field,
    jacobian: &mut dyn FnMut(&[f64]) -> Result<Mat8>,
    state0: &[f64],
    span: (f64, f64),
    cfg: &IntegrationConfig,
) -> Result<(Trajectory, Mat8)> {
    assert_eq!(state0.len(), 8, "variational integration is 8-dimensional");
    let mut aug = |s: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        field(s, &y[..8], &mut out[..8])?;
        let a = jacobian(&y[..8]).map_err(|e| match e {
            Error::DegenerateInput(reason) => Error::SingularityHit { s, reason },
            other => other,
        })?;
        let x = Mat8::from_column_slice(&y[8..]);
        out[8..].copy_from_slice((a * x).as_slice());
        Ok(())
    };
    let mut y0 = state0.to_vec();
    y0.extend_from_slice(Mat8::identity().as_slice());
    let mut traj = Trajectory::default();
    let (_, yf) = drive(&mut aug, &y0, span, cfg, 8, &mut |s, y| {
        traj.s.push(s);
        traj.states.push(y[..8].to_vec());
        true
    })?;
    Ok((traj, Mat8::from_column_slice(&yf[8..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn oscillator(_s: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = y[1];
        out[1] = -y[0];
        Ok(())
    }

    #[test]
    fn rk4_oscillator_returns_to_start() {
        let cfg = IntegrationConfig::rk4(2.0 * PI / 50_000.0);
        let tr = integrate(&mut oscillator, &[1.0, 0.0], (0.0, 2.0 * PI), &cfg).unwrap();
        assert_eq!(tr.len(), 50_001);
        let y = tr.last_state();
        assert!((y[0] - 1.0).abs() < 1e-12 && y[1].abs() < 1e-12);
    }

    #[test]
    fn rkf45_oscillator_backwards() {
        let cfg = IntegrationConfig::rkf45(1e-11);
        let tr = integrate(&mut oscillator, &[1.0, 0.0], (0.0, -1.0), &cfg).unwrap();
        let y = tr.last_state();
        assert_eq!(*tr.s.last().unwrap(), -1.0);
        assert!((y[0] - 1f64.cos()).abs() < 1e-9);
        assert!((y[1] - 1f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn zero_span_is_a_single_sample() {
        let cfg = IntegrationConfig::rkf45(1e-8);
        let tr = integrate(&mut oscillator, &[0.3, 0.4], (2.0, 2.0), &cfg).unwrap();
        assert_eq!(tr.s, vec![2.0]);
        assert_eq!(tr.states, vec![vec![0.3, 0.4]]);
    }

    #[test]
    fn time_quadrature() {
        let cfg = IntegrationConfig::rkf45(1e-12);
        let tr = integrate_with_time(&mut oscillator, &|y| y[0] * y[0], &[1.0, 0.0], (0.0, PI), &cfg).unwrap();
        assert!((tr.t.last().unwrap() - PI / 2.0).abs() < 1e-10);
        assert!(tr.t.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn event_on_oscillator() {
        let cfg = IntegrationConfig::rkf45(1e-12);
        let (s, y) = locate_event(&mut oscillator, &[1.0, 0.0], (0.0, 10.0), &cfg, &|y| y[0], Direction::Falling).unwrap();
        assert!((s - PI / 2.0).abs() < 1e-10);
        assert!(y[0].abs() < 1e-12);
        let (s, _) = locate_event(&mut oscillator, &[1.0, 0.0], (0.0, 10.0), &cfg, &|y| y[0], Direction::Rising).unwrap();
        assert!((s - 1.5 * PI).abs() < 1e-10);
    }

    #[test]
    fn event_at_start_and_missing_event() {
        let cfg = IntegrationConfig::rkf45(1e-10);
        let (s, y) = locate_event(&mut oscillator, &[0.0, 1.0], (0.5, 3.0), &cfg, &|y| y[0], Direction::Either).unwrap();
        assert_eq!((s, y), (0.5, vec![0.0, 1.0]));
        let mut grow = |_s: f64, _y: &[f64], out: &mut [f64]| -> Result<()> {
            out[0] = 1.0;
            Ok(())
        };
        let r = locate_event(&mut grow, &[1.0], (0.0, 5.0), &cfg, &|y| y[0], Direction::Either);
        assert!(matches!(r, Err(Error::NoEvent(_))));
    }

    #[test]
    fn constant_field_has_identity_variation() {
        let mut f = |_s: f64, _y: &[f64], out: &mut [f64]| -> Result<()> {
            out.copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
            Ok(())
        };
        let mut jac = |_y: &[f64]| -> Result<Mat8> { Ok(Mat8::zeros()) };
        let cfg = IntegrationConfig::rk4(0.01);
        let (_, x) = integrate_variational(&mut f, &mut jac, &[0.0; 8], (0.0, 1.0), &cfg).unwrap();
        assert_eq!(x, Mat8::identity());
    }

    #[test]
    fn field_singularity_is_reported_with_position() {
        let mut f = |s: f64, _y: &[f64], _out: &mut [f64]| -> Result<()> {
            if s > 0.5 {
                Err(Error::DegenerateInput("wall".into()))
            } else {
                Ok(())
            }
        };
        let r = integrate(&mut f, &[0.0], (0.0, 1.0), &IntegrationConfig::rk4(0.1));
        assert!(matches!(r, Err(Error::SingularityHit { .. })));
    }
}
