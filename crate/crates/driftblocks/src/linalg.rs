//! Small dense linear algebra helpers for symmetric positive definite
//! matrices.
//!
//! The matrices handled by this crate are tiny (`d_y` and `d_theta` are 1 or
//! 2 in the built-in models), so everything here is a direct textbook
//! implementation on `ndarray` storage. Inverses are never formed where a
//! Cholesky solve suffices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower Cholesky factor of a symmetric matrix, or `None` when a pivot is
/// non-positive or non-finite (the matrix is not positive definite).
pub fn cholesky(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    debug_assert_eq!(d, a.ncols());
    let mut l = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                // rejects non-positive and NaN pivots alike
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Determinant of the factored matrix, i.e. the squared product of the
/// diagonal of its Cholesky factor.
pub fn det_from_cholesky(l: &Array2<f64>) -> f64 {
    let p: f64 = l.diag().iter().product();
    p * p
}

/// Solve `A x = b` given the lower Cholesky factor `l` of `A`.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let d = l.nrows();
    let mut x = b.to_owned();
    // forward substitution: L w = b
    for i in 0..d {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    // back substitution: L^T x = w
    for i in (0..d).rev() {
        let mut s = x[i];
        for k in (i + 1)..d {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solve `A X = B` column by column given the lower Cholesky factor of `A`.
pub fn cholesky_solve_mat(l: &Array2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(b.raw_dim());
    for (j, col) in b.columns().into_iter().enumerate() {
        out.column_mut(j).assign(&cholesky_solve(l, col));
    }
    out
}

/// Inverse of a symmetric positive definite matrix via Cholesky solves
/// against the identity. Returns `None` when the matrix is not SPD.
pub fn spd_inverse(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let l = cholesky(a)?;
    let d = a.nrows();
    let mut inv = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut e = Array1::<f64>::zeros(d);
        e[j] = 1.0;
        inv.column_mut(j).assign(&cholesky_solve(&l, e.view()));
    }
    // symmetrize roundoff
    Some(symmetrize(&inv))
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    let d = a.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Frobenius norm of the difference `a - b`.
pub fn frobenius_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    debug_assert_eq!(a.raw_dim(), b.raw_dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Frobenius norm.
pub fn frobenius_norm(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
