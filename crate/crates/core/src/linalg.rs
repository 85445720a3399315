//! Dense decompositions, backed by nalgebra.
//!
//! Everything else in the crate works on `ndarray` matrices; this module
//! converts at the boundary.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

const SVD_MAX_ITERS: usize = 10_000;

pub(crate) fn to_nalgebra(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (rows, cols) = a.dim();
    DMatrix::from_fn(rows, cols, |i, j| a[[i, j]])
}

pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Thin SVD `A = U·diag(s)·Vᵀ` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub vt: Array2<f64>,
}

pub fn svd(a: ArrayView2<'_, f64>) -> Result<Svd> {
    let (rows, cols) = a.dim();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svd {
            u: Array2::zeros((rows, 0)),
            singular_values: Array1::zeros(0),
            vt: Array2::zeros((0, cols)),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("SVD input contains non-finite entries"));
    }
    let m = to_nalgebra(a);
    let mut dec = m
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::numeric(format!("SVD of a {rows}x{cols} matrix did not converge")))?;
    dec.sort_by_singular_values();
    let u = dec.u.as_ref().expect("requested U");
    let vt = dec.v_t.as_ref().expect("requested Vt");
    Ok(Svd {
        u: from_nalgebra(u),
        singular_values: Array1::from_iter(dec.singular_values.iter().copied()),
        vt: from_nalgebra(vt),
    })
}

/// Singular values in descending order.
pub fn singular_values(a: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("SVD input contains non-finite entries"));
    }
    let m = to_nalgebra(a);
    let dec = m
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::numeric("singular value computation did not converge"))?;
    let mut s: Vec<f64> = dec.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Sum of singular values.
pub fn nuclear_norm(a: ArrayView2<'_, f64>) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

/// Largest singular value.
pub fn spectral_norm(a: ArrayView2<'_, f64>) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: ArrayView2<'_, f64>) -> Vec<f64> {
    let m = to_nalgebra(a);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Solves `A·x = B` for symmetric positive definite `A`.
pub fn solve_spd(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let chol = to_nalgebra(a)
        .cholesky()
        .ok_or_else(|| Error::numeric("matrix is not positive definite"))?;
    Ok(from_nalgebra(&chol.solve(&to_nalgebra(b))))
}

/// Thin QR factorization of a tall matrix.
pub fn qr(a: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
    let dec = to_nalgebra(a).qr();
    (from_nalgebra(&dec.q()), from_nalgebra(&dec.r()))
}

/// Inverse of an upper-triangular matrix.
pub fn upper_triangular_inverse(r: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let m = to_nalgebra(r);
    let n = m.nrows();
    let inv = m
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::numeric("singular triangular factor"))?;
    Ok(from_nalgebra(&inv))
}

/// Largest absolute entry of `a`.
pub fn max_abs(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
