#![allow(dead_code)]

use cbpl::data::{make_synthetic_problem, DatasetBundle, SplitKind, SyntheticSpec};
use cbpl::linalg::Matrix;
use cbpl::solver::{Mode, SolverConfig};
use cbpl::synth::SynthSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Bundle with uniformly random features and prototypes; no structure.
pub fn random_bundle(rng: &mut ChaCha8Rng, d: usize, k: usize, p: usize, q: usize, per_class: usize) -> DatasetBundle {
    let n = p * per_class;
    DatasetBundle {
        seen_features: random_matrix(rng, d, n),
        seen_labels: (0..n).map(|i| i % p).collect(),
        seen_prototypes: random_matrix(rng, k, p),
        unseen_prototypes: random_matrix(rng, k, q),
        test_features: None,
        test_labels: None,
        split_kind: SplitKind::PureZsl,
    }
}

pub fn random_synth(rng: &mut ChaCha8Rng, d: usize, q: usize, n: usize) -> SynthSet {
    SynthSet {
        features: random_matrix(rng, d, n),
        guiding_class: (0..n).map(|i| i % q).collect(),
        source_index: vec![0; n],
    }
}

pub fn problem(d: usize, k: usize, p: usize, q: usize, n: usize, noise: f64, seed: u64) -> DatasetBundle {
    make_synthetic_problem(&SyntheticSpec::new(d, k, p, q, n, noise, seed))
        .unwrap()
        .0
}

fn col(m: &Matrix, j: usize) -> Vec<f64> {
    (0..m.rows()).map(|i| m[(i, j)]).collect()
}

/// `‖Wᵀx − y‖² + ‖x − Wy‖²` by explicit loops.
pub fn pair_loss(w: &Matrix, x: &[f64], y: &[f64]) -> f64 {
    let (d, k) = w.shape();
    let mut s = 0.0;
    for c in 0..k {
        let mut v = -y[c];
        for r in 0..d {
            v += w[(r, c)] * x[r];
        }
        s += v * v;
    }
    for r in 0..d {
        let mut v = x[r];
        for c in 0..k {
            v -= w[(r, c)] * y[c];
        }
        s += v * v;
    }
    s
}

/// Training objective evaluated sample by sample:
/// `Σ_s f(x_s, y_s) + γ·G + 2ν‖W‖²`, `γ = α/(1−α)`, `ν = β/(1−α)`.
pub fn naive_objective(w: &Matrix, bundle: &DatasetBundle, synth: &SynthSet, cfg: &SolverConfig, alpha: f64) -> f64 {
    let mut base = 0.0;
    for i in 0..bundle.n_seen() {
        let y = col(&bundle.seen_prototypes, bundle.seen_labels[i]);
        base += pair_loss(w, &col(&bundle.seen_features, i), &y);
    }
    let q = bundle.q();
    let mut g = 0.0;
    for i in 0..synth.len() {
        let x = col(&synth.features, i);
        let f: Vec<f64> = (0..q)
            .map(|j| pair_loss(w, &x, &col(&bundle.unseen_prototypes, j)))
            .collect();
        let mut sorted = f.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        g += match cfg.mode {
            Mode::Full => sorted[0] - cfg.mu * sorted[1],
            Mode::Bpl1 => sorted[0],
            Mode::NoAmbiguity => f[synth.guiding_class[i]],
            Mode::Entropy => {
                let m = sorted[0];
                let z: f64 = f.iter().map(|v| (-(v - m)).exp()).sum();
                -f.iter()
                    .map(|v| {
                        let pj = (-(v - m)).exp() / z;
                        if pj > 0.0 {
                            pj * pj.ln()
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
            }
            _ => 0.0,
        };
    }
    let reg: f64 = w.as_slice().iter().map(|v| v * v).sum();
    let gamma = alpha / (1.0 - alpha);
    let nu = cfg.beta / (1.0 - alpha);
    base + gamma * g + 2.0 * nu * reg
}

/// Central finite-difference gradient.
pub fn fd_gradient(w: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(w.rows(), w.cols());
    let mut probe = w.clone();
    for idx in 0..w.as_slice().len() {
        let orig = probe.as_slice()[idx];
        probe.as_mut_slice()[idx] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[idx] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[idx] = orig;
        g.as_mut_slice()[idx] = (up - down) / (2.0 * h);
    }
    g
}

/// Dense `(I⊗A + Bᵀ⊗I) vec(W) = vec(C)` solved by Gaussian elimination with
/// partial pivoting, independent of the library.
pub fn kron_reference(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let (d, k) = c.shape();
    let n = d * k;
    let mut m = vec![vec![0.0; n + 1]; n];
    // unknown index: column-major vec, W[(r, s)] -> s*d + r
    for s in 0..k {
        for r in 0..d {
            let row = s * d + r;
            for t in 0..d {
                m[row][s * d + t] += a[(r, t)];
            }
            for u in 0..k {
                m[row][u * d + r] += b[(u, s)];
            }
            m[row][n] = c[(r, s)];
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for j in col..=n {
                    m[row][j] -= f * m[col][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut v = m[row][n];
        for j in row + 1..n {
            v -= m[row][j] * x[j];
        }
        x[row] = v / m[row][row];
    }
    let mut w = Matrix::zeros(d, k);
    for s in 0..k {
        for r in 0..d {
            w[(r, s)] = x[s * d + r];
        }
    }
    w
}
