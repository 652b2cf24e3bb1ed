//! Real Schur decomposition `A = Q T Qᵀ` via Householder reduction to upper
//! Hessenberg form followed by Francis double-shift QR sweeps.
//!
//! `T` is quasi-upper-triangular: 1×1 diagonal blocks carry real eigenvalues,
//! 2×2 blocks carry complex-conjugate pairs. Any 2×2 block whose eigenvalues
//! turn out real is split with a Givens rotation, so every surviving 2×2
//! block has a strictly complex spectrum.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Sweeps allowed per deflated eigenvalue before giving up.
const MAX_SWEEPS_PER_EIGENVALUE: usize = 100;

#[derive(Debug, Clone)]
pub struct SchurForm {
    /// Orthogonal Schur vectors.
    pub q: Matrix,
    /// Quasi-upper-triangular factor.
    pub t: Matrix,
}

/// A diagonal block of the quasi-triangular factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagBlock {
    pub start: usize,
    pub size: usize,
}

impl SchurForm {
    /// Diagonal blocks in ascending order.
    pub fn blocks(&self) -> Vec<DiagBlock> {
        diag_blocks(&self.t)
    }

    /// Eigenvalues as `(re, im)` pairs in block order.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        let t = &self.t;
        let mut out = Vec::with_capacity(t.rows());
        for b in self.blocks() {
            if b.size == 1 {
                out.push((t[(b.start, b.start)], 0.0));
            } else {
                let i = b.start;
                let (re, im) = block_eigen(t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
                out.push((re, im));
                out.push((re, -im));
            }
        }
        out
    }
}

/// Splits a quasi-triangular matrix into its 1×1 / 2×2 diagonal blocks.
pub(crate) fn diag_blocks(t: &Matrix) -> Vec<DiagBlock> {
    let n = t.rows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push(DiagBlock { start: i, size: 2 });
            i += 2;
        } else {
            blocks.push(DiagBlock { start: i, size: 1 });
            i += 1;
        }
    }
    blocks
}

/// Eigenvalue `(re, |im|)` of a 2×2 block known to have a complex pair.
fn block_eigen(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let p = 0.5 * (a - d);
    let disc = p * p + b * c;
    let re = 0.5 * (a + d);
    if disc >= 0.0 {
        // Should not happen for a standardized block; report the real pair's mean.
        (re, 0.0)
    } else {
        (re, (-disc).sqrt())
    }
}

/// Computes the real Schur decomposition of a square matrix.
pub fn schur_decompose(a: &Matrix) -> Result<SchurForm> {
    if !a.is_square() {
        return Err(Error::dim(format!(
            "Schur decomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::invalid("Schur decomposition input has non-finite entries"));
    }
    let n = a.rows();
    let mut h = a.clone();
    let mut q = Matrix::identity(n);
    if n <= 1 {
        return Ok(SchurForm { q, t: h });
    }
    hessenberg(&mut h, &mut q);
    francis_qr(&mut h, &mut q)?;

    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            h[(i, j)] = 0.0;
        }
    }
    Ok(SchurForm { q, t: h })
}

/// Householder vector `v` (unnormalized) and `2/vᵀv` such that
/// `(I - tau v vᵀ) x = ±‖x‖ e₁`. Returns `None` when `x` is already a multiple of `e₁`.
fn householder(x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let tail: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail == 0.0 {
        return None;
    }
    let norm = (x[0] * x[0] + tail).sqrt();
    let mut v = x.to_vec();
    v[0] += if x[0] >= 0.0 { norm } else { -norm };
    let vtv: f64 = v.iter().map(|e| e * e).sum();
    Some((v, 2.0 / vtv))
}

/// Applies `I - tau v vᵀ` from the left to rows `r0..r0+len(v)`, columns `c0..c1`.
fn reflect_rows(m: &mut Matrix, v: &[f64], tau: f64, r0: usize, c0: usize, c1: usize) {
    for j in c0..c1 {
        let mut s = 0.0;
        for (l, &vl) in v.iter().enumerate() {
            s += vl * m[(r0 + l, j)];
        }
        s *= tau;
        for (l, &vl) in v.iter().enumerate() {
            m[(r0 + l, j)] -= s * vl;
        }
    }
}

/// Applies `I - tau v vᵀ` from the right to columns `c0..c0+len(v)`, rows `r0..r1`.
fn reflect_cols(m: &mut Matrix, v: &[f64], tau: f64, c0: usize, r0: usize, r1: usize) {
    for i in r0..r1 {
        let row = &mut m.row_mut(i)[c0..c0 + v.len()];
        let s = tau * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        for (a, &vl) in row.iter_mut().zip(v) {
            *a -= s * vl;
        }
    }
}

fn hessenberg(h: &mut Matrix, q: &mut Matrix) {
    let n = h.rows();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let Some((v, tau)) = householder(&x) else {
            continue;
        };
        reflect_rows(h, &v, tau, k + 1, k, n);
        reflect_cols(h, &v, tau, k + 1, 0, n);
        reflect_cols(q, &v, tau, k + 1, 0, n);
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
}

fn negligible(h: &Matrix, l: usize, scale: f64) -> bool {
    let mut s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
    if s == 0.0 {
        s = scale;
    }
    // Norm-wise fallback: clustered small eigenvalues next to large ones
    // leave subdiagonals at roundoff of the whole matrix, never of `s`.
    let sub = h[(l, l - 1)].abs();
    sub <= f64::EPSILON * s || sub <= f64::EPSILON * scale
}

fn francis_qr(h: &mut Matrix, q: &mut Matrix) -> Result<()> {
    let n = h.rows();
    let scale = h.frobenius_norm();
    let mut hi = n - 1;
    let mut sweeps = 0usize;
    let mut total = 0usize;

    loop {
        // Locate the start of the unreduced block ending at `hi`.
        let mut lo = hi;
        while lo > 0 {
            if negligible(h, lo, scale) {
                h[(lo, lo - 1)] = 0.0;
                break;
            }
            lo -= 1;
        }

        if lo == hi {
            sweeps = 0;
            if hi == 0 {
                break;
            }
            hi -= 1;
            continue;
        }
        if lo + 1 == hi {
            split_real_pair(h, q, lo);
            sweeps = 0;
            // With lo == 1, row 0 is already a deflated 1×1 block.
            if lo < 2 {
                break;
            }
            hi = lo - 1;
            continue;
        }

        sweeps += 1;
        total += 1;
        if sweeps > MAX_SWEEPS_PER_EIGENVALUE {
            return Err(Error::DecompositionFailure { iterations: total });
        }
        double_shift_sweep(h, q, lo, hi, sweeps);
    }
    Ok(())
}

fn double_shift_sweep(h: &mut Matrix, q: &mut Matrix, lo: usize, hi: usize, sweep: usize) {
    let n = h.rows();
    let (s, t) = if sweep % 10 == 0 {
        // Exceptional shift to break cycles.
        let w = h[(hi, hi - 1)].abs() + h[(hi - 1, hi - 2)].abs();
        let h11 = 0.75 * w + h[(hi, hi)];
        let h12 = -0.4375 * w;
        (2.0 * h11, h11 * h11 - h12 * w)
    } else {
        let a = h[(hi - 1, hi - 1)];
        let b = h[(hi - 1, hi)];
        let c = h[(hi, hi - 1)];
        let d = h[(hi, hi)];
        (a + d, a * d - b * c)
    };

    let h00 = h[(lo, lo)];
    let h10 = h[(lo + 1, lo)];
    let mut x = h00 * h00 + h[(lo, lo + 1)] * h10 - s * h00 + t;
    let mut y = h10 * (h00 + h[(lo + 1, lo + 1)] - s);
    let mut z = h10 * h[(lo + 2, lo + 1)];

    for k in lo..hi - 1 {
        if let Some((v, tau)) = householder(&[x, y, z]) {
            let c0 = if k > lo { k - 1 } else { lo };
            reflect_rows(h, &v, tau, k, c0, n);
            let r1 = (k + 4).min(hi + 1);
            reflect_cols(h, &v, tau, k, 0, r1);
            reflect_cols(q, &v, tau, k, 0, n);
            if k > lo {
                h[(k + 1, k - 1)] = 0.0;
                h[(k + 2, k - 1)] = 0.0;
            }
        }
        x = h[(k + 1, k)];
        y = h[(k + 2, k)];
        if k + 3 <= hi {
            z = h[(k + 3, k)];
        }
    }

    if let Some((v, tau)) = householder(&[x, y]) {
        let k = hi - 1;
        reflect_rows(h, &v, tau, k, k - 1, n);
        reflect_cols(h, &v, tau, k, 0, hi + 1);
        reflect_cols(q, &v, tau, k, 0, n);
        h[(hi, hi - 2)] = 0.0;
    }
}

/// Triangularizes the 2×2 block at `(i, i)` when its eigenvalues are real.
fn split_real_pair(h: &mut Matrix, q: &mut Matrix, i: usize) {
    let n = h.rows();
    let a = h[(i, i)];
    let b = h[(i, i + 1)];
    let c = h[(i + 1, i)];
    let d = h[(i + 1, i + 1)];
    if c == 0.0 {
        return;
    }
    let p = 0.5 * (a - d);
    let disc = p * p + b * c;
    if disc < 0.0 {
        return;
    }
    let z = p + p.signum() * disc.sqrt();
    let z = if p == 0.0 { disc.sqrt() } else { z };
    // Eigenvector (λ - d, c) for λ = d + z.
    let r = z.hypot(c);
    let (cs, sn) = (z / r, c / r);

    // Rows i, i+1: apply Gᵀ.
    for j in i..n {
        let u = h[(i, j)];
        let w = h[(i + 1, j)];
        h[(i, j)] = cs * u + sn * w;
        h[(i + 1, j)] = -sn * u + cs * w;
    }
    // Columns i, i+1: apply G.
    for k in 0..=i + 1 {
        let u = h[(k, i)];
        let w = h[(k, i + 1)];
        h[(k, i)] = cs * u + sn * w;
        h[(k, i + 1)] = -sn * u + cs * w;
    }
    for k in 0..n {
        let u = q[(k, i)];
        let w = q[(k, i + 1)];
        q[(k, i)] = cs * u + sn * w;
        q[(k, i + 1)] = -sn * u + cs * w;
    }
    h[(i + 1, i)] = 0.0;
}
