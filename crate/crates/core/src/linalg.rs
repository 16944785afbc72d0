//! Dense Cholesky helpers on top of LAPACK.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::{Cholesky, CholeskyInplace, Diag, SolveTriangular, UPLO};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// The matrix is first factorized as given. On failure `jitter0 * I` is added
/// and the attempt repeated, multiplying the jitter by ten each time, for at
/// most `retries` extra attempts.
pub fn cholesky_jittered(a: &Array2<f64>, jitter0: f64, retries: usize) -> Result<Array2<f64>> {
    if let Some(l) = try_cholesky(a.clone()) {
        return Ok(l);
    }
    let mut jitter = jitter0;
    for _ in 0..retries {
        let mut b = a.clone();
        b.diag_mut().mapv_inplace(|v| v + jitter);
        if let Some(l) = try_cholesky(b) {
            return Ok(l);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite)
}

/// Same as [`cholesky_jittered`] but consumes its input, which matters for
/// the large kernel matrices of the European surrogate.
pub fn cholesky_jittered_into(mut a: Array2<f64>, jitter0: f64, retries: usize) -> Result<Array2<f64>> {
    let backup_diag = a.diag().to_owned();
    let mut jitter = 0.0;
    for attempt in 0..=retries {
        if attempt > 0 {
            jitter = if attempt == 1 { jitter0 } else { jitter * 10.0 };
            // LAPACK overwrote the lower triangle; rebuild it from the intact upper one.
            let n = a.nrows();
            for i in 0..n {
                for j in 0..i {
                    a[[i, j]] = a[[j, i]];
                }
                a[[i, i]] = backup_diag[i] + jitter;
            }
        }
        if a.cholesky_inplace(UPLO::Lower).is_ok() && a.diag().iter().all(|&v| v > 0.0 && v.is_finite()) {
            zero_upper(&mut a);
            return Ok(a);
        }
    }
    Err(Error::NotPositiveDefinite)
}

fn try_cholesky(a: Array2<f64>) -> Option<Array2<f64>> {
    let l = a.cholesky(UPLO::Lower).ok()?;
    if l.diag().iter().all(|&v| v > 0.0 && v.is_finite()) {
        Some(l)
    } else {
        None
    }
}

fn zero_upper(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i + 1..n {
            a[[i, j]] = 0.0;
        }
    }
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    l.solve_triangular(UPLO::Lower, Diag::NonUnit, &b.to_owned())
        .expect("triangular solve on a valid Cholesky factor")
}

/// Solves `L X = B` column-wise for a matrix right-hand side.
pub fn solve_lower_mat(l: &Array2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    l.solve_triangular(UPLO::Lower, Diag::NonUnit, &b.to_owned())
        .expect("triangular solve on a valid Cholesky factor")
}

/// Solves `(L Lᵀ) x = b` given the lower factor.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let y = solve_lower(l, b);
    l.t()
        .solve_triangular(UPLO::Upper, Diag::NonUnit, &y)
        .expect("triangular solve on a valid Cholesky factor")
}

/// `log det(L Lᵀ)` from the lower factor.
pub fn log_det_from_factor(l: &Array2<f64>) -> f64 {
    2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn factor_and_solve_small_system() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky_jittered(&a, 1e-12, 3).unwrap();
        assert!((l[[0, 0]] - 2.0).abs() < 1e-15);
        assert!((l[[1, 0]] - 1.0).abs() < 1e-15);
        assert!((l[[1, 1]] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l[[0, 1]], 0.0);
        let x = cholesky_solve(&l, array![2.0, 1.0].view());
        // [4 2; 2 3] x = [2 1] -> x = [0.5, 0]
        assert!((x[0] - 0.5).abs() < 1e-14 && x[1].abs() < 1e-14);
        assert!((log_det_from_factor(&l) - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn inplace_matches_copying_variant() {
        let a = array![[2.0, 0.5, 0.1], [0.5, 1.5, 0.2], [0.1, 0.2, 1.0]];
        let l1 = cholesky_jittered(&a, 1e-12, 3).unwrap();
        let l2 = cholesky_jittered_into(a.clone(), 1e-12, 3).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn singular_matrix_needs_jitter() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(try_cholesky(a.clone()).is_none());
        let l = cholesky_jittered_into(a.clone(), 1e-10, 3).unwrap();
        assert!(l[[1, 1]] > 0.0);
        let negative = array![[1.0, 2.0], [2.0, 1.0]];
        assert_eq!(cholesky_jittered(&negative, 1e-12, 3), Err(Error::NotPositiveDefinite));
        assert_eq!(cholesky_jittered_into(negative, 1e-12, 3), Err(Error::NotPositiveDefinite));
    }
}
