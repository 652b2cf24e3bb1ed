use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn check_weights(n: usize, weights: Option<&[f64]>) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::dim(format!("{} weights for {} samples", w.len(), n)));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite sample weight"));
        }
    }
    Ok(())
}

/// `Σ_i w_i x_i x_iᵀ` over the columns `x_i` of `x` (`w_i = 1` when absent).
///
/// Samples are summed in ascending index order and each off-diagonal entry is
/// computed once and mirrored, so the result is exactly symmetric.
pub fn accumulate_gram(x: &Matrix, weights: Option<&[f64]>) -> Result<Matrix> {
    let (d, n) = x.shape();
    check_weights(n, weights)?;
    let weighted: Option<Matrix> = weights.map(|w| {
        let mut wx = x.clone();
        for a in 0..d {
            for (v, &wi) in wx.row_mut(a).iter_mut().zip(w) {
                *v *= wi;
            }
        }
        wx
    });
    let left = weighted.as_ref().unwrap_or(x);
    let mut g = Matrix::zeros(d, d);
    for a in 0..d {
        let ra = left.row(a);
        for b in a..d {
            let mut s = 0.0;
            for (&u, &v) in ra.iter().zip(x.row(b)) {
                s += u * v;
            }
            g[(a, b)] = s;
            g[(b, a)] = s;
        }
    }
    Ok(g)
}

/// `Σ_i w_i x_i y_iᵀ` for paired columns of `x` (`d×N`) and `y` (`k×N`).
pub fn accumulate_cross(x: &Matrix, y: &Matrix, weights: Option<&[f64]>) -> Result<Matrix> {
    let (d, n) = x.shape();
    let k = y.rows();
    if y.cols() != n {
        return Err(Error::dim(format!(
            "cross accumulation over {} and {} samples",
            n,
            y.cols()
        )));
    }
    check_weights(n, weights)?;
    let mut g = Matrix::zeros(d, k);
    for a in 0..d {
        let ra = x.row(a);
        for b in 0..k {
            let rb = y.row(b);
            let mut s = 0.0;
            match weights {
                Some(w) => {
                    for i in 0..n {
                        s += w[i] * ra[i] * rb[i];
                    }
                }
                None => {
                    for (&u, &v) in ra.iter().zip(rb) {
                        s += u * v;
                    }
                }
            }
            g[(a, b)] = s;
        }
    }
    Ok(g)
}
