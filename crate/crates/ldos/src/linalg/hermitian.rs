//! Eigendecomposition of dense complex Hermitian matrices.
//!
//! Householder reduction to Hermitian tridiagonal form, a diagonal phase
//! similarity to make the off-diagonal real, then implicit-shift QL
//! iteration on the real symmetric tridiagonal problem with the
//! transformations accumulated into the complex eigenvector matrix.

use super::{identity, CMatrix, C64};
use crate::error::{LdosError, Result};

const QL_MAX_SWEEPS: usize = 64;

/// Eigenvalues (ascending) and an orthonormal eigenvector matrix, column j
/// belonging to eigenvalue j.
pub fn eig_hermitian(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LdosError::DimensionMismatch(format!(
            "eig_hermitian expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros((0, 0))));
    }

    let mut t = a.clone();
    let mut q = identity(n);

    // Householder reduction: zero out column k below the first subdiagonal.
    for k in 0..n.saturating_sub(2) {
        let norm_x: f64 = (k + 1..n).map(|i| t[[i, k]].norm_sqr()).sum::<f64>().sqrt();
        if norm_x < 1e-300 {
            continue;
        }
        let x0 = t[[k + 1, k]];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let alpha = -phase * norm_x;

        let len = n - k - 1;
        let mut u = vec![C64::new(0.0, 0.0); len];
        u[0] = x0 - alpha;
        for i in 1..len {
            u[i] = t[[k + 1 + i, k]];
        }
        let un: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if un < 1e-300 {
            continue;
        }
        for z in u.iter_mut() {
            *z /= un;
        }

        // t <- P t with P = I - 2 u u^dag acting on rows k+1..n
        for j in 0..n {
            let s: C64 = (0..len).map(|i| u[i].conj() * t[[k + 1 + i, j]]).sum();
            let s2 = s * 2.0;
            for i in 0..len {
                t[[k + 1 + i, j]] -= s2 * u[i];
            }
        }
        // t <- t P on columns k+1..n
        for i in 0..n {
            let s: C64 = (0..len).map(|l| t[[i, k + 1 + l]] * u[l]).sum();
            let s2 = s * 2.0;
            for l in 0..len {
                t[[i, k + 1 + l]] -= s2 * u[l].conj();
            }
        }
        // q <- q P
        for i in 0..n {
            let s: C64 = (0..len).map(|l| q[[i, k + 1 + l]] * u[l]).sum();
            let s2 = s * 2.0;
            for l in 0..len {
                q[[i, k + 1 + l]] -= s2 * u[l].conj();
            }
        }
    }

    // Phase similarity making the off-diagonal real and nonnegative.
    let mut d = vec![0.0_f64; n];
    let mut e = vec![0.0_f64; n]; // e[i] couples i and i+1; e[n-1] unused
    let mut zeta = vec![C64::new(1.0, 0.0); n];
    for i in 0..n {
        d[i] = t[[i, i]].re;
    }
    for i in 0..n - 1 {
        let off = t[[i, i + 1]];
        let mag = off.norm();
        e[i] = mag;
        zeta[i + 1] = if mag > 0.0 { zeta[i] * off.conj() / mag } else { zeta[i] };
    }
    let mut z = q;
    for j in 0..n {
        for i in 0..n {
            z[[i, j]] *= zeta[j];
        }
    }

    ql_implicit_shift(&mut d, &mut e, &mut z)?;

    // Sort ascending, reorder eigenvector columns to match.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = CMatrix::zeros((n, n));
    for (jnew, &jold) in order.iter().enumerate() {
        for i in 0..n {
            vectors[[i, jnew]] = z[[i, jold]];
        }
    }
    Ok((values, vectors))
}

/// Implicit-shift QL on a real symmetric tridiagonal (d, e), rotations
/// accumulated into the complex matrix z.
fn ql_implicit_shift(d: &mut [f64], e: &mut [f64], z: &mut CMatrix) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    // ework[i] couples d[i] and d[i+1]; ework[n-1] is a sentinel.
    let mut ework = vec![0.0_f64; n];
    ework[..n - 1].copy_from_slice(&e[..n - 1]);
    ework[n - 1] = 0.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            // find a negligible subdiagonal element
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if ework[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_SWEEPS {
                return Err(LdosError::NumericalFailure {
                    context: "QL iteration failed to converge".to_string(),
                    residual: ework[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * ework[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + ework[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0_f64, 1.0_f64);
            let mut p = 0.0_f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * ework[i];
                let b = c * ework[i];
                r = f.hypot(g);
                ework[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    ework[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // accumulate rotation into complex eigenvector columns i, i+1
                for k in 0..z.nrows() {
                    f = z[[k, i + 1]].re;
                    let fi = z[[k, i + 1]].im;
                    let gr = z[[k, i]].re;
                    let gi = z[[k, i]].im;
                    z[[k, i + 1]] = C64::new(s * gr + c * f, s * gi + c * fi);
                    z[[k, i]] = C64::new(c * gr - s * f, c * gi - s * fi);
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            ework[l] = g;
            ework[m] = 0.0;
        }
    }
    Ok(())
}
