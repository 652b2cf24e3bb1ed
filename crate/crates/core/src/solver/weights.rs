//! Per-sample losses against every candidate class and the relaxed
//! (sub)gradients of the best-match and runner-up minimum functions.

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};

/// Threshold replacing the relative gap test when a row minimum is exactly 0.
pub const ZERO_MIN_ABS_THRESHOLD: f64 = 1e-12;

/// `η`, `ξ` and `δ = η − μξ` over synthesized samples × candidate classes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientWeights {
    pub eta: Matrix,
    pub xi: Matrix,
    pub delta: Matrix,
}

/// `F[i, j] = ‖Wᵀx_i − y_j‖² + ‖x_i − W y_j‖²` for columns `x_i` of `x` and
/// `y_j` of `y`.
pub fn loss_matrix(w: &Matrix, x: &Matrix, y: &Matrix) -> Result<Matrix> {
    let (d, k) = w.shape();
    if x.rows() != d || y.rows() != k {
        return Err(Error::dim(format!(
            "loss needs x with {d} rows and y with {k} rows, got {} and {}",
            x.rows(),
            y.rows()
        )));
    }
    let (n, q) = (x.cols(), y.cols());
    let protos: Vec<Vec<f64>> = (0..q).map(|j| y.column(j)).collect();
    let projected: Vec<Vec<f64>> = protos.iter().map(|yj| w.matvec(yj)).collect::<Result<_>>()?;
    let mut f = Matrix::zeros(n, q);
    for i in 0..n {
        let xi = x.column(i);
        let u = w.matvec_transposed(&xi)?;
        let row = f.row_mut(i);
        for j in 0..q {
            row[j] = squared_distance(&u, &protos[j]) + squared_distance(&xi, &projected[j]);
        }
    }
    Ok(f)
}

fn within(f: f64, min: f64, epsilon: f64) -> bool {
    if min > 0.0 {
        (f - min) / min < epsilon
    } else {
        f - min < ZERO_MIN_ABS_THRESHOLD
    }
}

/// Relaxed gradient of `min_j f_ij`: uniform weight over every class whose
/// loss is within relative gap `epsilon` of the row minimum.
///
/// Returns the `η` matrix and, per row, the best-match set `j(i)`.
pub fn min_gradient_eta(f: &Matrix, epsilon: f64) -> (Matrix, Vec<Vec<usize>>) {
    let (n, q) = f.shape();
    let mut eta = Matrix::zeros(n, q);
    let mut sets = Vec::with_capacity(n);
    for i in 0..n {
        let row = f.row(i);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let set: Vec<usize> = (0..q).filter(|&j| within(row[j], min, epsilon)).collect();
        let w = 1.0 / set.len() as f64;
        for &j in &set {
            eta[(i, j)] = w;
        }
        sets.push(set);
    }
    (eta, sets)
}

/// Relaxed gradient of the runner-up minimum `min_{j ∉ j(i)} f_ij`.
pub fn second_min_gradient_xi(f: &Matrix, best_sets: &[Vec<usize>], epsilon: f64) -> Result<Matrix> {
    let (n, q) = f.shape();
    if best_sets.len() != n {
        return Err(Error::dim(format!("{} best-match sets for {n} rows", best_sets.len())));
    }
    let mut xi = Matrix::zeros(n, q);
    let mut outside = vec![true; q];
    for i in 0..n {
        outside.iter_mut().for_each(|o| *o = true);
        for &j in &best_sets[i] {
            outside[j] = false;
        }
        let row = f.row(i);
        let runner_up = (0..q)
            .filter(|&j| outside[j])
            .map(|j| row[j])
            .fold(f64::INFINITY, f64::min);
        if runner_up == f64::INFINITY {
            return Err(Error::NoRunnerUp { sample: i });
        }
        let set: Vec<usize> = (0..q)
            .filter(|&j| outside[j] && within(row[j], runner_up, epsilon))
            .collect();
        let w = 1.0 / set.len() as f64;
        for &j in &set {
            xi[(i, j)] = w;
        }
    }
    Ok(xi)
}

/// One-hot rows pinning each sample to its guiding class.
pub fn pinned_eta(guiding: &[usize], q: usize) -> Result<Matrix> {
    let mut eta = Matrix::zeros(guiding.len(), q);
    for (i, &g) in guiding.iter().enumerate() {
        if g >= q {
            return Err(Error::invalid(format!("guiding class {g} out of range 0..{q}")));
        }
        eta[(i, g)] = 1.0;
    }
    Ok(eta)
}

/// `δ = η − μ ξ`.
pub fn combine_delta(eta: &Matrix, xi: &Matrix, mu: f64) -> Matrix {
    let mut delta = eta.clone();
    for (dv, &x) in delta.as_mut_slice().iter_mut().zip(xi.as_slice()) {
        *dv -= mu * x;
    }
    delta
}

/// Row-wise argmin with lowest-index tie-breaking.
pub fn row_argmin(f: &Matrix) -> Vec<usize> {
    (0..f.rows())
        .map(|i| {
            let row = f.row(i);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] < row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
