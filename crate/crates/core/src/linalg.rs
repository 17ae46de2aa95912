//! Small dense complex linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * cr(0.5)
}

/// Real part of `tr(A B)`.
pub fn re_trace_prod(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)] * b[(k, i)];
            acc += x.re;
        }
    }
    acc
}

/// Real trace inner product of two Hermitian matrices, `Re tr(A^H B)`.
pub fn herm_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frob_norm(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

/// Quadratic form `x^H A x` (real part).
pub fn quad_form(a: &CMat, x: &CVec) -> f64 {
    x.dotc(&(a * x)).re
}

pub fn diag_matrix(d: &[C64]) -> CMat {
    CMat::from_diagonal(&CVec::from_row_slice(d))
}

/// Hermitian eigendecomposition with eigenvalues sorted in descending order.
/// Column `k` of the returned matrix is the eigenvector for `values[k]`.
pub fn herm_eig(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Dominant eigenpair of a Hermitian matrix. Ties are broken by the
/// deterministic ordering of the eigendecomposition.
pub fn dominant_eig(a: &CMat) -> (f64, CVec) {
    let (vals, vecs) = herm_eig(a);
    (vals[0], vecs.column(0).into_owned())
}

pub fn min_eig(a: &CMat) -> f64 {
    let (vals, _) = herm_eig(a);
    vals.last().copied().unwrap_or(0.0)
}

/// PSD square root via eigendecomposition; negative eigenvalues are clipped.
pub fn psd_sqrt(a: &CMat) -> CMat {
    let (vals, vecs) = herm_eig(a);
    let n = a.nrows();
    let mut scaled = vecs.clone();
    for k in 0..n {
        let s = vals[k].max(0.0).sqrt();
        for r in 0..n {
            scaled[(r, k)] *= s;
        }
    }
    scaled * vecs.adjoint()
}

/// Projection of a Hermitian matrix onto the PSD cone.
pub fn psd_project(a: &CMat) -> CMat {
    let (vals, vecs) = herm_eig(a);
    let n = a.nrows();
    let mut out = CMat::zeros(n, n);
    for k in 0..n {
        if vals[k] > 0.0 {
            let v = vecs.column(k);
            out += (&v * v.adjoint()) * cr(vals[k]);
        }
    }
    out
}

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = theta.rem_euclid(tau);
    if r >= tau {
        0.0
    } else {
        r
    }
}

/// Relative difference `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Real representation of a complex matrix, `[[Re, -Im], [Im, Re]]`.
pub fn realify(a: &CMat) -> RMat {
    let (r, c_) = a.shape();
    let mut out = RMat::zeros(2 * r, 2 * c_);
    for i in 0..r {
        for j in 0..c_ {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c_)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c_)] = z.re;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_sorted_descending() {
        let a = CMat::from_row_slice(2, 2, &[cr(1.0), c(0.0, 1.0), c(0.0, -1.0), cr(3.0)]);
        let (vals, vecs) = herm_eig(&a);
        assert!(vals[0] >= vals[1]);
        let v = vecs.column(0).into_owned();
        let av = &a * &v;
        for k in 0..2 {
            assert!((av[k] - v[k] * vals[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let b = CMat::from_fn(3, 3, |i, j| c((i + 2 * j) as f64 * 0.3, (i as f64 - j as f64) * 0.1));
        let a = &b * b.adjoint();
        let s = psd_sqrt(&a);
        assert!(frob_norm(&(&s * &s - &a)) < 1e-10 * frob_norm(&a));
    }

    #[test]
    fn wrap_phase_range() {
        for t in [-7.0, -0.1, 0.0, 3.0, 6.5, 100.0] {
            let w = wrap_phase(t);
            assert!((0.0..std::f64::consts::TAU).contains(&w));
            assert!(((w - t) / std::f64::consts::TAU).fract().abs() < 1e-9 || ((w - t) / std::f64::consts::TAU).fract().abs() > 1.0 - 1e-9);
        }
    }
}
