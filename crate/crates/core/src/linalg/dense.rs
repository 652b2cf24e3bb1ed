//! Small dense factorizations shared by the solvers.

use crate::linalg::Matrix;

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
///
/// `a` is `n×n` row-major, `b` is `n×m` row-major (multiple right-hand sides).
/// Returns `false` when a pivot falls below `tol` in absolute value.
pub(crate) fn gauss_solve_in_place(a: &mut [f64], b: &mut [f64], n: usize, m: usize, tol: f64) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * m);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > tol) {
            return false;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            for j in 0..m {
                b.swap(col * m + j, piv * m + j);
            }
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f == 0.0 {
                continue;
            }
            a[r * n + col] = 0.0;
            for j in col + 1..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            for j in 0..m {
                b[r * m + j] -= f * b[col * m + j];
            }
        }
    }
    for col in (0..n).rev() {
        let p = a[col * n + col];
        for j in 0..m {
            let mut s = b[col * m + j];
            for l in col + 1..n {
                s -= a[col * n + l] * b[l * m + j];
            }
            b[col * m + j] = s / p;
        }
    }
    true
}

/// Solves `a X = b` for square `a`. Returns `None` if `a` is numerically singular.
pub fn lu_solve(a: &Matrix, b: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    assert!(a.is_square() && b.rows() == n);
    let mut lhs = a.as_slice().to_vec();
    let mut rhs = b.as_slice().to_vec();
    let tol = f64::EPSILON * n as f64 * a.max_abs();
    if gauss_solve_in_place(&mut lhs, &mut rhs, n, b.cols(), tol) {
        Some(Matrix::from_vec_unchecked(n, b.cols(), rhs))
    } else {
        None
    }
}

/// Lower Cholesky factor of a symmetric matrix, or `None` if it is not
/// positive definite.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    if !a.is_square() {
        return None;
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}
