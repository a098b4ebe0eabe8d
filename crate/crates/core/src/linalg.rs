//! Small dense kernels shared by the operator, solver and analysis code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::model::Scalar;

/// `Σ conj(a_k) · b_k`.
#[inline]
pub(crate) fn dot(a: &[Scalar], b: &[Scalar]) -> Scalar {
    let mut acc = Scalar::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

#[inline]
pub(crate) fn norm_sqr(a: &[Scalar]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

#[inline]
pub(crate) fn norm(a: &[Scalar]) -> f64 {
    norm_sqr(a).sqrt()
}

/// `y += alpha · x`.
#[inline]
pub(crate) fn axpy(alpha: Scalar, x: &[Scalar], y: &mut [Scalar]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub(crate) fn hermitian_extremes(m: &DMatrix<Scalar>) -> (f64, f64) {
    match m.nrows() {
        0 => (0.0, 0.0),
        1 => (m[(0, 0)].re, m[(0, 0)].re),
        2 => {
            let (lo, hi) = eig2(m[(0, 0)].re, m[(1, 1)].re, m[(0, 1)]);
            (lo, hi)
        }
        _ => {
            let eig = SymmetricEigen::new(m.clone());
            let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    }
}

/// Eigenvalues of the Hermitian 2×2 matrix `[[a, b], [conj(b), d]]`.
#[inline]
pub(crate) fn eig2(a: f64, d: f64, b: Scalar) -> (f64, f64) {
    let mean = 0.5 * (a + d);
    let half_gap = 0.5 * (a - d);
    let r = (half_gap * half_gap + b.norm_sqr()).sqrt();
    (mean - r, mean + r)
}

/// Largest singular value of a small dense matrix.
pub(crate) fn spectral_norm(m: &DMatrix<Scalar>) -> f64 {
    let gram = if m.nrows() >= m.ncols() {
        m.adjoint() * m
    } else {
        m * m.adjoint()
    };
    hermitian_extremes(&gram).1.max(0.0).sqrt()
}

/// Dense least squares `argmin ‖cols · z − rhs‖`. Householder QR when the
/// columns are numerically independent, otherwise the minimum-norm solution
/// through an SVD. Returns the solution and whether the columns were rank
/// deficient.
pub(crate) fn dense_least_squares(cols: DMatrix<Scalar>, rhs: &DVector<Scalar>) -> (DVector<Scalar>, bool) {
    let (rows, k) = cols.shape();
    if k == 0 {
        return (DVector::zeros(0), false);
    }
    let eps = f64::EPSILON * rows.max(k) as f64;
    if rows >= k {
        let qr = cols.clone().qr();
        let r = qr.r();
        let diag_max = (0..k).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
        let full_rank = diag_max > 0.0 && (0..k).all(|i| r[(i, i)].norm() > 1e3 * eps * diag_max);
        if full_rank {
            let qtb = qr.q().adjoint() * rhs;
            if let Some(z) = r.solve_upper_triangular(&qtb) {
                return (z, false);
            }
        }
    }
    let svd = cols.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = 1e3 * eps * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let z = svd
        .solve(rhs, cutoff.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(k));
    (z, rank < k)
}
