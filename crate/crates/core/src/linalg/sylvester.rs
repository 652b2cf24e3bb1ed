//! Dense solvers for the Sylvester equation `A W + W B = C`.
//!
//! [`solve_sylvester`] is the Bartels–Stewart route used by the fitting code.
//! [`kron_oracle_solve`] vectorizes the equation and solves the `dk×dk`
//! system directly; it exists to cross-check the first route on small sizes.

use crate::error::{Error, Result};
use crate::linalg::dense::gauss_solve_in_place;
use crate::linalg::schur::{diag_blocks, schur_decompose, DiagBlock};
use crate::linalg::Matrix;

/// Largest `d·k` accepted by [`kron_oracle_solve`].
pub const KRON_ORACLE_MAX_UNKNOWNS: usize = 4096;

/// Relative tolerance for the spectral-overlap test between `A` and `-B`.
pub const PENCIL_TOLERANCE: f64 = 1e-10;

fn check_dims(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::dim(format!(
            "Sylvester coefficients must be square, got A {}x{} and B {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if c.rows() != a.rows() || c.cols() != b.rows() {
        return Err(Error::dim(format!(
            "right-hand side is {}x{}, expected {}x{}",
            c.rows(),
            c.cols(),
            a.rows(),
            b.rows()
        )));
    }
    Ok(())
}

/// `‖A W + W B − C‖_F`.
pub fn sylvester_residual(a: &Matrix, b: &Matrix, w: &Matrix, c: &Matrix) -> f64 {
    let aw = a.matmul(w).expect("A W dimensions");
    let wb = w.matmul(b).expect("W B dimensions");
    let mut r = aw;
    r.add_scaled(1.0, &wb).expect("shape");
    r.add_scaled(-1.0, c).expect("shape");
    r.frobenius_norm()
}

/// Solves `A W + W B = C` by the Bartels–Stewart algorithm.
///
/// Both coefficients are reduced to real Schur form; the transformed system
/// is then solved block by block, with 1×1, 2×2 or 4×4 dense solves for the
/// diagonal-block couplings. Fails with [`Error::SingularPencil`] if some
/// eigenvalue of `A` is (numerically) the negative of an eigenvalue of `B`.
pub fn solve_sylvester(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    check_dims(a, b, c)?;
    let sa = schur_decompose(a)?;
    let sb = schur_decompose(b)?;

    let tol = PENCIL_TOLERANCE * (a.frobenius_norm() + b.frobenius_norm());
    let ea = sa.eigenvalues();
    let eb = sb.eigenvalues();
    let mut closest = f64::INFINITY;
    for &(ar, ai) in &ea {
        for &(br, bi) in &eb {
            closest = closest.min((ar + br).hypot(ai + bi));
        }
    }
    if closest < tol {
        return Err(Error::SingularPencil(format!(
            "spectra of A and -B are {closest:.3e} apart (tolerance {tol:.3e})"
        )));
    }

    let f = sa.q.transpose().matmul(c)?.matmul(&sb.q)?;
    let z = solve_quasi_triangular(&sa.t, &sb.t, f)?;
    sa.q.matmul(&z)?.matmul(&sb.q.transpose())
}

/// Solves `Ta Z + Z Tb = F` with both factors upper quasi-triangular.
fn solve_quasi_triangular(ta: &Matrix, tb: &Matrix, mut z: Matrix) -> Result<Matrix> {
    let d = ta.rows();
    let k = tb.rows();
    let blocks_a = diag_blocks(ta);
    let blocks_b = diag_blocks(tb);
    let scale = ta.max_abs().max(tb.max_abs()).max(f64::MIN_POSITIVE);

    for jb in &blocks_b {
        // Fold in the already-solved columns to the left.
        for c in jb.start..jb.start + jb.size {
            for l in 0..jb.start {
                let coef = tb[(l, c)];
                if coef == 0.0 {
                    continue;
                }
                for i in 0..d {
                    z[(i, c)] -= coef * z[(i, l)];
                }
            }
        }
        for ib in blocks_a.iter().rev() {
            let (si, sj) = (ib.size, jb.size);
            let mut rhs = [0.0; 4];
            for r in 0..si {
                let row = ib.start + r;
                for c in 0..sj {
                    let col = jb.start + c;
                    let mut s = z[(row, col)];
                    for m in ib.start + si..d {
                        s -= ta[(row, m)] * z[(m, col)];
                    }
                    rhs[r * sj + c] = s;
                }
            }
            let sol = solve_block(ta, tb, ib, jb, &mut rhs[..si * sj], scale)?;
            for r in 0..si {
                for c in 0..sj {
                    z[(ib.start + r, jb.start + c)] = sol[r * sj + c];
                }
            }
        }
    }
    debug_assert_eq!(z.shape(), (d, k));
    Ok(z)
}

/// Solves the `si·sj` coupled system `TaII X + X TbJJ = rhs`.
fn solve_block<'r>(
    ta: &Matrix,
    tb: &Matrix,
    ib: &DiagBlock,
    jb: &DiagBlock,
    rhs: &'r mut [f64],
    scale: f64,
) -> Result<&'r [f64]> {
    let (si, sj) = (ib.size, jb.size);
    let n = si * sj;
    let mut m = [0.0; 16];
    for r in 0..si {
        for c in 0..sj {
            let row = r * sj + c;
            for q in 0..si {
                m[row * n + q * sj + c] += ta[(ib.start + r, ib.start + q)];
            }
            for l in 0..sj {
                m[row * n + r * sj + l] += tb[(jb.start + l, jb.start + c)];
            }
        }
    }
    if gauss_solve_in_place(&mut m[..n * n], rhs, n, 1, f64::EPSILON * scale) {
        Ok(rhs)
    } else {
        Err(Error::SingularPencil(format!(
            "diagonal blocks at A[{}], B[{}] are singular",
            ib.start, jb.start
        )))
    }
}

/// Solves `A W + W B = C` through the vectorized Kronecker system
/// `(I_k ⊗ A + Bᵀ ⊗ I_d) vec(W) = vec(C)`.
pub fn kron_oracle_solve(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    check_dims(a, b, c)?;
    let d = a.rows();
    let k = b.rows();
    let n = d * k;
    if n > KRON_ORACLE_MAX_UNKNOWNS {
        return Err(Error::Size(format!(
            "Kronecker oracle limited to {KRON_ORACLE_MAX_UNKNOWNS} unknowns, got {n}"
        )));
    }
    // Column-major vectorization: vec(W)[i + j d] = W[i, j].
    let mut m = vec![0.0; n * n];
    for j in 0..k {
        for i in 0..d {
            let row = i + j * d;
            for l in 0..d {
                m[row * n + l + j * d] += a[(i, l)];
            }
            for mm in 0..k {
                m[row * n + i + mm * d] += b[(mm, j)];
            }
        }
    }
    let mut rhs = vec![0.0; n];
    for j in 0..k {
        for i in 0..d {
            rhs[i + j * d] = c[(i, j)];
        }
    }
    let max_abs = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = f64::EPSILON * n as f64 * max_abs;
    if !gauss_solve_in_place(&mut m, &mut rhs, n, 1, tol) {
        return Err(Error::SingularPencil("vectorized Sylvester system is singular".into()));
    }
    let mut w = Matrix::zeros(d, k);
    for j in 0..k {
        for i in 0..d {
            w[(i, j)] = rhs[i + j * d];
        }
    }
    Ok(w)
}
