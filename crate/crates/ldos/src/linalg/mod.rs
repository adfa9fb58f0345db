//! Dense complex linear algebra primitives used throughout the crate.

pub mod hermitian;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CVector = Array1<C64>;
pub type CMatrix = Array2<C64>;

pub fn identity(n: usize) -> CMatrix {
    let mut m = CMatrix::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = C64::new(1.0, 0.0);
    }
    m
}

/// Conjugate transpose.
pub fn adjoint(a: &CMatrix) -> CMatrix {
    let (r, c) = a.dim();
    CMatrix::from_shape_fn((c, r), |(i, j)| a[[j, i]].conj())
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn norm2(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Inner product <a|b> = sum conj(a_i) b_i.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn basis_vector(n: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[i] = C64::new(1.0, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjoint_of_adjoint_is_identity_map() {
        let a = CMatrix::from_shape_fn((3, 3), |(i, j)| C64::new(i as f64, j as f64 + 1.0));
        assert_eq!(adjoint(&adjoint(&a)), a);
    }

    #[test]
    fn inner_product_conjugate_linearity() {
        let a = CVector::from_vec(vec![C64::new(1.0, 2.0), C64::new(0.0, -1.0)]);
        let b = CVector::from_vec(vec![C64::new(3.0, 0.0), C64::new(1.0, 1.0)]);
        let lhs = inner(&a, &b);
        let rhs = inner(&b, &a).conj();
        assert!((lhs - rhs).norm() < 1e-15);
    }
}
