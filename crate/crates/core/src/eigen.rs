//! Dense real eigensolver: balancing, Householder reduction to upper
//! Hessenberg form and the Francis double-shift QR iteration.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const RADIX: f64 = 2.0;

/// Diagonal similarity by powers of two that equalizes row and column norms.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let (mut r, mut c) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            let g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form (in place).
fn hessenberg(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for k in 0..n.saturating_sub(2) {
        let norm = (k + 1..n).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[(k + 1, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vn);
        // rows k+1.. from the left
        for j in 0..n {
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * a[(k + 1 + t, j)]).sum();
            for (t, vi) in v.iter().enumerate() {
                a[(k + 1 + t, j)] -= 2.0 * vi * dot;
            }
        }
        // columns k+1.. from the right
        for i in 0..n {
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * a[(i, k + 1 + t)]).sum();
            for (t, vi) in v.iter().enumerate() {
                a[(i, k + 1 + t)] -= 2.0 * vi * dot;
            }
        }
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix (destroys `a`).
#[allow(unused_assignments)]
fn hqr(a: &mut DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let mut wr = vec![Complex64::new(0.0, 0.0); n];
    let eps = f64::EPSILON;
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let max_its = 30 * n * n;
    let mut total = 0usize;
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l > 0 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() <= eps * s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nu, nu)];
            if l == nu {
                wr[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
            } else {
                let mut y = a[(nu - 1, nu - 1)];
                let mut w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
                if l == nu - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nu - 1] = Complex64::new(x + z, 0.0);
                        wr[nu] = wr[nu - 1];
                        if z != 0.0 {
                            wr[nu] = Complex64::new(x - w / z, 0.0);
                        }
                    } else {
                        wr[nu] = Complex64::new(x + p, -z);
                        wr[nu - 1] = wr[nu].conj();
                    }
                    nn -= 2;
                } else {
                    if total >= max_its {
                        return Err(Error::NoConvergence(format!("{max_its} QR sweeps")));
                    }
                    if its > 0 && its % 10 == 0 {
                        // exceptional shift
                        t += x;
                        for i in 0..=nu {
                            a[(i, i)] -= x;
                        }
                        let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    total += 1;
                    let mut m = nu - 2;
                    loop {
                        let z = a[(m, m)];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[(m + 1, m)] + a[(m, m + 1)];
                        q = a[(m + 1, m + 1)] - z - rr - ss;
                        r = a[(m + 2, m + 1)];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nu - 1 {
                        a[(i + 2, i)] = 0.0;
                        if i != m {
                            a[(i + 2, i - 1)] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[(k, k - 1)];
                            q = a[(k + 1, k - 1)];
                            r = 0.0;
                            if k + 1 != nu {
                                r = a[(k + 2, k - 1)];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[(k, k - 1)] = -a[(k, k - 1)];
                                }
                            } else {
                                a[(k, k - 1)] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            let z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                                if k + 1 != nu {
                                    pp += r * a[(k + 2, j)];
                                    a[(k + 2, j)] -= pp * z;
                                }
                                a[(k + 1, j)] -= pp * y;
                                a[(k, j)] -= pp * x;
                            }
                            let mmin = if nu < k + 3 { nu } else { k + 3 };
                            for i in l..=mmin {
                                let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                                if k + 1 != nu {
                                    pp += z * a[(i, k + 2)];
                                    a[(i, k + 2)] -= pp * r;
                                }
                                a[(i, k + 1)] -= pp * q;
                                a[(i, k)] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 0 || l + 1 >= nn as usize {
                break;
            }
        }
    }
    Ok(wr)
}

/// All eigenvalues of a real square matrix, sorted by modulus (descending),
/// ties broken by real then imaginary part.
pub fn eigenvalues(mat: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !mat.is_square() {
        return Err(Error::InvalidParameter("eigenvalues of a non-square matrix".into()));
    }
    if mat.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let mut a = mat.clone();
    balance(&mut a);
    hessenberg(&mut a);
    let mut ev = hqr(&mut a)?;
    ev.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then(x.re.total_cmp(&y.re))
            .then(x.im.total_cmp(&y.im))
    });
    Ok(ev)
}

/// Eigenvalues of the 8×8 monodromy.
pub fn eigenvalues8(mat: &crate::dynamics::Mat8) -> Result<Vec<Complex64>> {
    eigenvalues(&DMatrix::from_column_slice(8, 8, mat.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_ones() {
        let ev = eigenvalues(&DMatrix::identity(8, 8)).unwrap();
        assert!(ev.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn rotation_blocks() {
        let th: [f64; 4] = [0.3, 1.1, 2.0, 2.9];
        let mut a = DMatrix::zeros(8, 8);
        for (k, &t) in th.iter().enumerate() {
            let i = 2 * k;
            a[(i, i)] = t.cos();
            a[(i, i + 1)] = -t.sin();
            a[(i + 1, i)] = t.sin();
            a[(i + 1, i + 1)] = t.cos();
        }
        let ev = eigenvalues(&a).unwrap();
        for t in th {
            for sg in [1.0, -1.0] {
                let want = Complex64::from_polar(1.0, sg * t);
                let best = ev.iter().map(|z| (z - want).norm()).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-12, "{t}: {best}");
            }
        }
    }

    #[test]
    fn triangular_and_small() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 5.0, 0.0, -3.0, 4.0, 0.0, 0.0, 0.5]);
        let ev = eigenvalues(&a).unwrap();
        let re: Vec<f64> = ev.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![-3.0, 2.0, 0.5]);
        let one = eigenvalues(&DMatrix::from_element(1, 1, 7.0)).unwrap();
        assert_eq!(one, vec![Complex64::new(7.0, 0.0)]);
        assert!(eigenvalues(&DMatrix::zeros(2, 3)).is_err());
    }
}
