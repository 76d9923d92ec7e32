//! Eigenvalues of a general real matrix: balancing, Householder reduction to
//! upper Hessenberg form, then Francis double-shift QR iteration.

use num_complex::Complex64;

use super::Matrix;
use crate::error::{Error, Result};

/// Subdiagonal entries below this fraction of the neighbouring diagonal mass are zeroed.
const DEFLATION_TOL: f64 = 1e-12;
const MAX_ITERATIONS_PER_ROW: usize = 100;

/// All eigenvalues of `m`, with multiplicity.
///
/// Ordering follows the deflation order of the QR iteration; it is not sorted
/// but is deterministic for a fixed input.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Domain("eigenvalues of non-finite matrix".into()));
    }
    let mut a = m.clone();
    balance(&mut a);
    reduce_to_hessenberg(&mut a);
    hessenberg_qr(a)
}

/// Diagonal similarity scaling by powers of two so row and column norms are comparable.
fn balance(a: &mut Matrix) {
    const RADIX: f64 = 2.0;
    let n = a.rows();
    let radix_sq = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
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
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= radix_sq;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= radix_sq;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

fn reduce_to_hessenberg(a: &mut Matrix) {
    let n = a.rows();
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let norm = (k + 1..n).map(|i| a[(i, k)].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[(k + 1, k)] > 0.0 { -norm } else { norm };
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] -= alpha;
        let vnorm = (k + 1..n).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for vi in &mut v[k + 1..n] {
            *vi /= vnorm;
        }
        // A <- (I - 2vv^T) A
        for j in k..n {
            let dot: f64 = (k + 1..n).map(|i| v[i] * a[(i, j)]).sum();
            for i in k + 1..n {
                a[(i, j)] -= 2.0 * v[i] * dot;
            }
        }
        // A <- A (I - 2vv^T)
        for i in 0..n {
            let dot: f64 = (k + 1..n).map(|j| a[(i, j)] * v[j]).sum();
            for j in k + 1..n {
                a[(i, j)] -= 2.0 * dot * v[j];
            }
        }
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

fn hessenberg_qr(mut a: Matrix) -> Result<Vec<Complex64>> {
    let n = a.rows();
    let mut found = Vec::with_capacity(n);
    if n == 0 {
        return Ok(found);
    }
    let max_iterations = MAX_ITERATIONS_PER_ROW * n;
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }

    let mut nn = n as isize - 1;
    let mut shift_total = 0.0;
    let mut its = 0usize;
    let mut total_its = 0usize;
    while nn >= 0 {
        let hi = nn as usize;
        let mut l = hi;
        while l > 0 {
            let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
            if s == 0.0 {
                s = anorm;
            }
            if a[(l, l - 1)].abs() <= DEFLATION_TOL * s {
                a[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }

        let mut x = a[(hi, hi)];
        if l == hi {
            found.push(Complex64::new(x + shift_total, 0.0));
            nn -= 1;
            its = 0;
            continue;
        }
        let mut y = a[(hi - 1, hi - 1)];
        let mut w = a[(hi, hi - 1)] * a[(hi - 1, hi)];
        if l == hi - 1 {
            let p = 0.5 * (y - x);
            let q = p * p + w;
            let z = q.abs().sqrt();
            x += shift_total;
            if q >= 0.0 {
                let z = p + z.copysign(p);
                let first = x + z;
                let second = if z != 0.0 { x - w / z } else { first };
                found.push(Complex64::new(first, 0.0));
                found.push(Complex64::new(second, 0.0));
            } else {
                found.push(Complex64::new(x + p, z));
                found.push(Complex64::new(x + p, -z));
            }
            nn -= 2;
            its = 0;
            continue;
        }

        if total_its >= max_iterations {
            return Err(Error::Convergence {
                iterations: total_its,
                n,
                found,
            });
        }
        if its > 0 && its.is_multiple_of(10) {
            // Exceptional shift.
            shift_total += x;
            for i in 0..=hi {
                a[(i, i)] -= x;
            }
            let s = a[(hi, hi - 1)].abs() + a[(hi - 1, hi - 2)].abs();
            x = 0.75 * s;
            y = x;
            w = -0.4375 * s * s;
        }
        its += 1;
        total_its += 1;

        // Look for two consecutive small subdiagonal elements.
        let mut m = hi - 2;
        let (mut p, mut q, mut r);
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
            if u <= f64::EPSILON * v {
                break;
            }
            m -= 1;
        }
        for i in m..hi - 1 {
            a[(i + 2, i)] = 0.0;
            if i != m {
                a[(i + 2, i - 1)] = 0.0;
            }
        }

        // Double QR step on rows l..=hi and columns m..=hi.
        for k in m..hi {
            if k != m {
                p = a[(k, k - 1)];
                q = a[(k + 1, k - 1)];
                r = if k + 1 != hi { a[(k + 2, k - 1)] } else { 0.0 };
                x = p.abs() + q.abs() + r.abs();
                if x != 0.0 {
                    p /= x;
                    q /= x;
                    r /= x;
                }
            }
            let s = (p * p + q * q + r * r).sqrt().copysign(p);
            if s == 0.0 {
                continue;
            }
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
            for j in k..=hi {
                let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                if k + 1 != hi {
                    pp += r * a[(k + 2, j)];
                    a[(k + 2, j)] -= pp * z;
                }
                a[(k + 1, j)] -= pp * y;
                a[(k, j)] -= pp * x;
            }
            let mmin = hi.min(k + 3);
            for i in l..=mmin {
                let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                if k + 1 != hi {
                    pp += z * a[(i, k + 2)];
                    a[(i, k + 2)] -= pp * r;
                }
                a[(i, k + 1)] -= pp * q;
                a[(i, k)] -= pp;
            }
        }
    }
    Ok(found)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}
