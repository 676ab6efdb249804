//! Dense Cholesky for the small symmetric positive-definite systems that
//! appear in least-squares fitting. Matrices here are at most a few dozen
//! rows, so an unblocked factorization is plenty.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = a`.
///
/// Fails if `a` is not square or a pivot is non-positive (matrix not
/// numerically positive definite).
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "cholesky requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::Numerical(format!(
                        "cholesky pivot {i} is non-positive ({sum:.3e}); matrix is not positive definite"
                    )));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn chol_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    // Forward substitution: L y = b.
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let t = l[[i, k]] * y[k];
            y[i] -= t;
        }
        y[i] /= l[[i, i]];
    }
    // Back substitution: Lᵀ x = y.
    let mut x = y;
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = l[[k, i]] * x[k];
            x[i] -= t;
        }
        x[i] /= l[[i, i]];
    }
    x
}
