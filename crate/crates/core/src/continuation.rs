//! Minimization of the residual functional over trigonometric coefficients,
//! energy tuning onto the level set `Γ̂ = 0`, and continuation in the mass
//! ratio.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coords::validate_mass;
use crate::dynamics::{jacobian_vf, vector_field_slice};
use crate::error::{Error, Result};
use crate::orbitrep::{residual_l_on, GridBasis, TrigOrbit};
use crate::coords::RegState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MinimizerKind {
    /// Levenberg-Marquardt on the squared residual `∫ ‖r‖² ds`.
    LevenbergMarquardt,
    /// BFGS on `L` itself with central-difference gradients.
    Bfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    pub n_start: usize,
    pub n_end: usize,
    pub dm: f64,
    /// Required `|Γ̂(γ(π/4))|`.
    pub gamma_tol: f64,
    /// Minimizer stopping tolerance on the step (relative to the
    /// coefficient size).
    pub opt_tol: f64,
    pub max_iter: usize,
    /// Trapezoid nodes for the residual.
    pub grid: usize,
    pub minimizer: MinimizerKind,
    pub bracket_half_width: f64,
    pub bracket_max_half_width: f64,
    pub max_bisections: usize,
    /// Records with a larger final `L` are flagged.
    pub abort_l: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            n_start: 5,
            n_end: 24,
            dm: 0.01,
            gamma_tol: 5e-10,
            opt_tol: 1e-12,
            max_iter: 60,
            grid: 512,
            minimizer: MinimizerKind::LevenbergMarquardt,
            bracket_half_width: 0.05,
            bracket_max_half_width: 0.2,
            max_bisections: 80,
            abort_l: 1e-3,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_start == 0 || self.n_start > self.n_end {
            return Err(Error::InvalidParameter(format!(
                "term bounds n_start = {}, n_end = {}",
                self.n_start, self.n_end
            )));
        }
        if !(self.dm > 0.0 && self.gamma_tol > 0.0 && self.opt_tol > 0.0) {
            return Err(Error::InvalidParameter("dm and tolerances must be positive".into()));
        }
        if self.grid < 4 * self.n_end {
            return Err(Error::InvalidParameter(format!("grid of {} nodes is too coarse", self.grid)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimized {
    pub orbit: TrigOrbit,
    /// `L` on the configured grid.
    pub l: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Residual `w (γ'(s_j) - J∇Γ̂(γ(s_j)))` stacked over the grid, with
/// `w² = 2π/N` so that its squared norm is the trapezoid value of `∫‖r‖²`.
struct Problem {
    basis: GridBasis,
    m: f64,
    e_hat: f64,
    w: f64,
}

impl Problem {
    fn new(n: usize, grid: usize, m: f64, e_hat: f64) -> Self {
        Problem {
            basis: GridBasis::new(n, grid),
            m,
            e_hat,
            w: (2.0 * std::f64::consts::PI / grid as f64).sqrt(),
        }
    }

    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let vals = &self.basis.value * x;
        let mut r = &self.basis.deriv * x;
        let mut f = [0.0; 8];
        for j in 0..self.basis.len() {
            let z = &vals.as_slice()[8 * j..8 * j + 8];
            vector_field_slice(z, &mut f, self.m, self.e_hat)?;
            for i in 0..8 {
                r[8 * j + i] = self.w * (r[8 * j + i] - f[i]);
            }
        }
        Ok(r)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let vals = &self.basis.value * x;
        let cols = x.len();
        let mut jr = self.basis.deriv.clone();
        for j in 0..self.basis.len() {
            let z = RegState::from_array(&vals.as_slice()[8 * j..8 * j + 8]);
            let a = jacobian_vf(&z, self.m, self.e_hat)?;
            let bj = self.basis.value.rows(8 * j, 8);
            let ab = a * bj;
            let mut block = jr.view_mut((8 * j, 0), (8, cols));
            block -= ab;
            block *= self.w;
        }
        Ok(jr)
    }
}

fn levenberg_marquardt(orb0: &TrigOrbit, cfg: &ContinuationConfig) -> Result<(TrigOrbit, usize, bool)> {
    let prob = Problem::new(orb0.n, cfg.grid, orb0.m, orb0.e_hat);
    let mut x = DVector::from_vec(orb0.coefficients());
    let mut r = prob.residual(&x)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-6;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let jr = prob.jacobian(&x)?;
        let g = jr.tr_mul(&r);
        let h = jr.tr_mul(&jr);
        let mut accepted = None;
        while lambda < 1e16 {
            let mut mat = h.clone();
            for i in 0..mat.nrows() {
                mat[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let Some(chol) = mat.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -chol.solve(&g);
            let trial = &x + &step;
            match prob.residual(&trial) {
                Ok(rt) if rt.norm_squared() <= cost => {
                    accepted = Some((trial, rt, step));
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        let Some((xn, rn, step)) = accepted else {
            // no descent direction left: at a minimum to working precision
            converged = true;
            break;
        };
        lambda = (lambda / 10.0).max(1e-15);
        let small = step.amax() <= cfg.opt_tol * (1.0 + xn.amax());
        x = xn;
        r = rn;
        cost = r.norm_squared();
        if small {
            converged = true;
            break;
        }
    }
    Ok((orb0.with_coefficients(x.as_slice()), iterations, converged))
}

fn bfgs(orb0: &TrigOrbit, cfg: &ContinuationConfig) -> Result<(TrigOrbit, usize, bool)> {
    let f = |x: &[f64]| residual_l_on(&orb0.with_coefficients(x), cfg.grid);
    let grad = |x: &[f64]| -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let h = 1e-7 * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = f(&xp)?;
            xp[i] = x[i] - h;
            let fm = f(&xp)?;
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    };
    let n = orb0.n * 4;
    let mut x = orb0.coefficients();
    let mut fx = f(&x)?;
    let mut g = grad(&x)?;
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut p = -(&hinv * &gv);
        if p.dot(&gv) >= 0.0 {
            hinv = DMatrix::identity(n, n);
            p = -gv.clone();
        }
        let slope = p.dot(&gv);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let xt: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + t * b).collect();
            if let Ok(ft) = f(&xt) {
                if ft <= fx + 1e-4 * t * slope {
                    next = Some((xt, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = next else {
            // line search failure: keep the best point found
            break;
        };
        let gn = grad(&xn)?;
        let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        let small = s.amax() <= cfg.opt_tol * (1.0 + xn.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        x = xn;
        fx = fxn;
        g = gn;
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(n, n);
            let left = &id - rho * &s * y.transpose();
            let right = &id - rho * &y * s.transpose();
            hinv = &left * &hinv * &right + rho * &s * s.transpose();
        }
        if small || g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= cfg.opt_tol {
            converged = true;
            break;
        }
    }
    Ok((orb0.with_coefficients(&x), iterations, converged))
}

/// Minimizes the residual over the coefficients at fixed `m` and `Ê`.
pub fn minimize_l(orb0: &TrigOrbit, cfg: &ContinuationConfig) -> Result<Minimized> {
    let (orbit, iterations, converged) = match cfg.minimizer {
        MinimizerKind::LevenbergMarquardt => levenberg_marquardt(orb0, cfg)?,
        MinimizerKind::Bfgs => bfgs(orb0, cfg)?,
    };
    let l = residual_l_on(&orbit, cfg.grid)?;
    Ok(Minimized {
        orbit,
        l,
        iterations,
        converged,
    })
}

/// Coefficient given to each newly added term.
pub const NEW_TERM_SEED: f64 = 1e-6;

/// Adds one harmonic (seeded with a small value) and re-minimizes.
pub fn escalate_terms(orb: &TrigOrbit, cfg: &ContinuationConfig) -> Result<Minimized> {
    if orb.n >= cfg.n_end {
        return Err(Error::Escalation(format!("already at n_end = {}", cfg.n_end)));
    }
    let mut next = orb.clone();
    next.n += 1;
    for list in [&mut next.a, &mut next.b, &mut next.c, &mut next.d] {
        list.push(NEW_TERM_SEED);
    }
    minimize_l(&next, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tuned {
    pub orbit: TrigOrbit,
    pub e_hat: f64,
    pub gamma_at_quarter: f64,
    pub l: f64,
    /// Number of minimizations performed.
    pub solves: usize,
}

fn solve_at(seed: &TrigOrbit, e_hat: f64, cfg: &ContinuationConfig) -> Result<(Minimized, f64)> {
    let mut start = seed.clone();
    start.e_hat = e_hat;
    let min = minimize_l(&start, cfg)?;
    let c = min.orbit.gamma_at_quarter()?;
    Ok((min, c))
}

/// Finds `Ê` with `|Γ̂(γ(π/4))| < gamma_tol`, re-minimizing the orbit at
/// every trial energy (bisection on a bracket around `e_guess`).
pub fn tune_energy(orb: &TrigOrbit, e_guess: f64, cfg: &ContinuationConfig) -> Result<Tuned> {
    let (m0, c0) = solve_at(orb, e_guess, cfg)?;
    let mut solves = 1;
    let done = |min: Minimized, e: f64, c: f64, solves: usize| Tuned {
        e_hat: e,
        gamma_at_quarter: c,
        l: min.l,
        orbit: min.orbit,
        solves,
    };
    if c0.abs() < cfg.gamma_tol {
        return Ok(done(m0, e_guess, c0, solves));
    }
    // bracket: (energy, defect, orbit)
    let mut bracket = None;
    let mut w = cfg.bracket_half_width;
    while w <= cfg.bracket_max_half_width * (1.0 + 1e-12) {
        let (ml, cl) = solve_at(&m0.orbit, e_guess - w, cfg)?;
        let (mh, ch) = solve_at(&m0.orbit, e_guess + w, cfg)?;
        solves += 2;
        let lo = (e_guess - w, cl, ml);
        let mid = (e_guess, c0, m0.clone());
        let hi = (e_guess + w, ch, mh);
        if lo.1 * mid.1 <= 0.0 {
            bracket = Some((lo, mid));
        } else if mid.1 * hi.1 <= 0.0 {
            bracket = Some((mid, hi));
        } else if lo.1 * hi.1 <= 0.0 {
            bracket = Some((lo, hi));
        }
        if bracket.is_some() {
            break;
        }
        w *= 2.0;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Err(Error::BracketFailure {
            lo: e_guess - w / 2.0,
            hi: e_guess + w / 2.0,
        });
    };
    for (e, c, min) in [&lo, &hi] {
        if c.abs() < cfg.gamma_tol {
            return Ok(done(min.clone(), *e, *c, solves));
        }
    }
    for _ in 0..cfg.max_bisections {
        let e = 0.5 * (lo.0 + hi.0);
        let seed = if lo.1.abs() < hi.1.abs() { &lo.2.orbit } else { &hi.2.orbit };
        let (mm, cm) = solve_at(seed, e, cfg)?;
        solves += 1;
        if cm.abs() < cfg.gamma_tol {
            return Ok(done(mm, e, cm, solves));
        }
        if (cm > 0.0) == (lo.1 > 0.0) {
            lo = (e, cm, mm);
        } else {
            hi = (e, cm, mm);
        }
        if hi.0 - lo.0 <= 4.0 * f64::EPSILON * e.abs() {
            break;
        }
    }
    let best = if lo.1.abs() < hi.1.abs() { lo } else { hi };
    Err(Error::EnergyTuning(format!(
        "bisection stalled at Ê = {} with defect {:.3e}",
        best.0, best.1
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub m: f64,
    pub orbit: TrigOrbit,
    pub e_hat: f64,
    pub final_l: f64,
    pub gamma_at_quarter: f64,
    /// Set when the step failed; `orbit` is then the best attempt.
    pub flagged: bool,
    pub note: Option<String>,
}

impl SweepRecord {
    pub fn from_tuned(m: f64, t: Tuned) -> Self {
        SweepRecord {
            m,
            e_hat: t.e_hat,
            final_l: t.l,
            gamma_at_quarter: t.gamma_at_quarter,
            orbit: t.orbit,
            flagged: false,
            note: None,
        }
    }
}

/// Mass values `m_from, m_from - dm, ..., m_to` (rounded to 1e-9).
pub fn mass_schedule(m_from: f64, m_to: f64, dm: f64) -> Result<Vec<f64>> {
    validate_mass(m_from)?;
    validate_mass(m_to)?;
    if m_to > m_from || !(dm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sweep must descend: m_from = {m_from}, m_to = {m_to}, dm = {dm}"
        )));
    }
    let steps = ((m_from - m_to) / dm + 1e-9).floor() as usize;
    let round = |x: f64| (x * 1e9).round() / 1e9;
    let mut ms: Vec<f64> = (0..=steps).map(|k| round(m_from - k as f64 * dm)).collect();
    if (ms[ms.len() - 1] - m_to).abs() > 1e-9 {
        ms.push(round(m_to));
    }
    Ok(ms)
}

/// One continuation step from `seed` to mass `m`.
pub fn continue_to(seed: &TrigOrbit, m: f64, e_guess: f64, cfg: &ContinuationConfig) -> Result<Tuned> {
    validate_mass(m)?;
    let mut orb = seed.clone();
    orb.m = m;
    orb.e_hat = e_guess;
    while orb.n < cfg.n_end {
        orb = escalate_terms(&orb, cfg)?.orbit;
    }
    tune_energy(&orb, e_guess, cfg)
}

/// Continues `seed` down the mass schedule. Each step starts from the last
/// successful record (energy extrapolated linearly from the last two).
/// Failed steps are emitted flagged and do not become seeds.
pub fn sweep(
    seed: &TrigOrbit,
    m_from: f64,
    m_to: f64,
    cfg: &ContinuationConfig,
    progress: &mut dyn FnMut(&SweepRecord),
) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    seed.validate()?;
    let ms = mass_schedule(m_from, m_to, cfg.dm)?;
    let mut records: Vec<SweepRecord> = Vec::with_capacity(ms.len());
    let mut good: Vec<usize> = Vec::new();
    for (i, &m) in ms.iter().enumerate() {
        let (base, e_guess) = match good.as_slice() {
            [] => (seed, seed.e_hat),
            [j] => (&records[*j].orbit, records[*j].e_hat),
            [.., p, q] => {
                let (rp, rq) = (&records[*p], &records[*q]);
                let slope = (rq.e_hat - rp.e_hat) / (rq.m - rp.m);
                (&rq.orbit, rq.e_hat + slope * (m - rq.m))
            }
        };
        let outcome = continue_to(base, m, e_guess, cfg);
        let rec = match outcome {
            Ok(t) if t.l <= cfg.abort_l => SweepRecord::from_tuned(m, t),
            Ok(t) => {
                let note = format!("final L = {:.3e} exceeds {:.1e}", t.l, cfg.abort_l);
                SweepRecord {
                    flagged: true,
                    note: Some(note),
                    ..SweepRecord::from_tuned(m, t)
                }
            }
            Err(e) if i == 0 => return Err(Error::SeedFailure(e.to_string())),
            Err(e) => {
                let mut orbit = base.clone();
                orbit.m = m;
                orbit.e_hat = e_guess;
                SweepRecord {
                    m,
                    final_l: residual_l_on(&orbit, cfg.grid).unwrap_or(f64::NAN),
                    gamma_at_quarter: orbit.gamma_at_quarter().unwrap_or(f64::NAN),
                    e_hat: e_guess,
                    orbit,
                    flagged: true,
                    note: Some(e.to_string()),
                }
            }
        };
        if i == 0 && rec.flagged {
            return Err(Error::SeedFailure(rec.note.unwrap_or_default()));
        }
        if !rec.flagged {
            good.push(records.len());
        }
        progress(&rec);
        records.push(rec);
    }
    Ok(records)
}
