//! Small dense helpers over `ndarray` complex matrices.

use ndarray::{Array1, Array2, ArrayView2, ShapeBuilder};
use ndarray_linalg::{Eigh, EigValsh, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

pub(crate) fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// Max-norm of `a - a^dagger`.
pub(crate) fn hermitian_deviation(a: ArrayView2<'_, C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[[i, j]] - a[[j, i]].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

#[cfg(test)]
pub(crate) fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    ndarray::Zip::from(a)
        .and(b)
        .fold(0.0f64, |acc, x, y| acc.max((x - y).norm()))
}

pub(crate) fn symmetrize(a: &mut Array2<C64>) {
    let n = a.nrows();
    for i in 0..n {
        a[[i, i]] = C64::new(a[[i, i]].re, 0.0);
        for j in (i + 1)..n {
            let avg = (a[[i, j]] + a[[j, i]].conj()) * 0.5;
            a[[i, j]] = avg;
            a[[j, i]] = avg.conj();
        }
    }
}

pub(crate) fn trace(a: &Array2<C64>) -> C64 {
    a.diag().iter().sum()
}

/// `Tr(a b)` without forming the product.
pub(crate) fn trace_product(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[[i, k]] * b[[k, i]];
        }
    }
    acc
}

pub(crate) fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag(&Array1::from_elem(n, ONE))
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// The input is copied to column-major order first: for row-major complex
/// input the LAPACK wrapper returns eigenvectors of the conjugate matrix.
pub(crate) fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let mut f = Array2::zeros(a.raw_dim().f());
    f.assign(a);
    f.eigh(UPLO::Upper).map_err(|e| Error::Eigen(e.to_string()))
}

pub(crate) fn eigvalsh(a: &Array2<C64>) -> Result<Array1<f64>> {
    a.eigvalsh(UPLO::Upper)
        .map_err(|e| Error::Eigen(e.to_string()))
}

/// `v diag(d) v^dagger`.
pub(crate) fn reassemble(vectors: &Array2<C64>, diag: &Array1<C64>) -> Array2<C64> {
    let scaled = vectors * &diag.view().insert_axis(ndarray::Axis(0));
    scaled.dot(&dagger(vectors))
}

/// Largest |eigenvalue| of a Hermitian matrix.
pub(crate) fn spectral_norm_hermitian(a: &Array2<C64>) -> Result<f64> {
    let ev = eigvalsh(a)?;
    Ok(ev.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}
