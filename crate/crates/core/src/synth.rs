//! Feature synthesis by perturbation.
//!
//! ZSL: real seen-class samples are shifted towards an unseen class along the
//! projected prototype offset `W(y_u − y_s)`. FSL: the intra-class offsets of
//! the real shots are re-centred on the projected (noisy) novel prototype.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, SupportSet};
use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};

/// Synthesized features and where each one came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSet {
    /// `d×N_g`.
    pub features: Matrix,
    /// Unseen/novel class (in `0..q`) whose prototype guided each sample.
    pub guiding_class: Vec<usize>,
    /// Column of the real sample each synthesized sample was derived from.
    pub source_index: Vec<usize>,
}

impl SynthSet {
    pub fn len(&self) -> usize {
        self.features.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn empty(d: usize) -> Self {
        Self {
            features: Matrix::zeros(d, 0),
            guiding_class: Vec::new(),
            source_index: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Perturbation weight in `(0, 1]`.
    pub rho: f64,
    /// Seen-class neighbours per unseen class.
    pub k_g: usize,
    pub samples_per_neighbour: usize,
    /// Cap on synthesized samples per unseen class.
    pub per_class_budget: Option<usize>,
    /// Semantic noise multiplier for few-shot synthesis.
    pub fsl_noise_sigma: f64,
    pub fsl_copies_per_shot: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            k_g: 3,
            samples_per_neighbour: 5,
            per_class_budget: Some(15),
            fsl_noise_sigma: 0.1,
            fsl_copies_per_shot: 5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if self.k_g == 0 {
            return Err(Error::invalid("k_g must be at least 1"));
        }
        if self.samples_per_neighbour == 0 || self.fsl_copies_per_shot == 0 {
            return Err(Error::invalid("sample counts must be positive"));
        }
        if self.per_class_budget == Some(0) {
            return Err(Error::invalid("per-class budget must be positive"));
        }
        if !(self.fsl_noise_sigma >= 0.0) || !self.fsl_noise_sigma.is_finite() {
            return Err(Error::invalid("fsl_noise_sigma must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Per-class stream seed, so every class draws independently of the others.
pub(crate) fn derive_seed(seed: u64, class: usize) -> u64 {
    seed ^ (class as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Indices of the `k_g` seen prototypes closest to `y_u` (Euclidean), nearest
/// first; equal distances keep the lower class index first.
pub fn knn_prototypes(y_u: &[f64], seen_prototypes: &Matrix, k_g: usize) -> Result<Vec<usize>> {
    let p = seen_prototypes.cols();
    if k_g == 0 || k_g > p {
        return Err(Error::invalid(format!("k_g = {k_g} must lie in 1..={p}")));
    }
    if y_u.len() != seen_prototypes.rows() {
        return Err(Error::dim(format!(
            "prototype has length {}, expected {}",
            y_u.len(),
            seen_prototypes.rows()
        )));
    }
    let mut ranked: Vec<(f64, usize)> = (0..p)
        .map(|j| (squared_distance(y_u, &seen_prototypes.column(j)), j))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(k_g).map(|(_, j)| j).collect())
}

fn step_scale(w: &Matrix, rho: f64) -> Result<f64> {
    let norm_sq = w.frobenius_norm_sq();
    if norm_sq == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    Ok(rho / norm_sq)
}

/// Synthesizes unseen-class features from perturbed seen samples.
///
/// Each unseen class receives `k_g · samples_per_neighbour` samples (capped
/// by `per_class_budget`), split as evenly as possible over its non-empty
/// neighbour classes, nearest neighbours taking any remainder.
pub fn synthesize_zsl(bundle: &DatasetBundle, w: &Matrix, cfg: &SynthConfig) -> Result<SynthSet> {
    cfg.validate()?;
    if w.shape() != (bundle.d(), bundle.k()) {
        return Err(Error::dim(format!(
            "projection is {}x{}, bundle needs {}x{}",
            w.rows(),
            w.cols(),
            bundle.d(),
            bundle.k()
        )));
    }
    let scale = step_scale(w, cfg.rho)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bundle.p()];
    for (i, &l) in bundle.seen_labels.iter().enumerate() {
        members[l].push(i);
    }
    let per_class = {
        let wanted = cfg.k_g * cfg.samples_per_neighbour;
        cfg.per_class_budget.map_or(wanted, |b| wanted.min(b))
    };

    let d = bundle.d();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut guiding = Vec::new();
    let mut sources = Vec::new();
    for j in 0..bundle.q() {
        let y_u = bundle.unseen_prototypes.column(j);
        let neighbours = knn_prototypes(&y_u, &bundle.seen_prototypes, cfg.k_g)?;
        let usable: Vec<usize> = neighbours
            .iter()
            .copied()
            .filter(|&c| {
                let ok = !members[c].is_empty();
                if !ok {
                    log::warn!("seen class {c} has no samples; skipped as neighbour of unseen class {j}");
                }
                ok
            })
            .collect();
        if usable.is_empty() {
            return Err(Error::invalid(format!(
                "no neighbouring seen class of unseen class {j} has samples"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, j));
        let base = per_class / usable.len();
        let extra = per_class % usable.len();
        for (rank, &c) in usable.iter().enumerate() {
            let count = base + usize::from(rank < extra);
            if count == 0 {
                continue;
            }
            let offset: Vec<f64> = y_u
                .iter()
                .zip(bundle.seen_prototypes.column(c))
                .map(|(u, s)| u - s)
                .collect();
            let shift: Vec<f64> = w.matvec(&offset)?.into_iter().map(|v| v * scale).collect();
            let pool = &members[c];
            let picks: Vec<usize> = if pool.len() >= count {
                index::sample(&mut rng, pool.len(), count).into_vec()
            } else {
                (0..count).map(|_| rng.random_range(0..pool.len())).collect()
            };
            for pick in picks {
                let src = pool[pick];
                let mut x: Vec<f64> = (0..d).map(|r| bundle.seen_features[(r, src)]).collect();
                for (xv, s) in x.iter_mut().zip(&shift) {
                    *xv += s;
                }
                columns.push(x);
                guiding.push(j);
                sources.push(src);
            }
        }
    }
    let features = if columns.is_empty() {
        Matrix::zeros(d, 0)
    } else {
        Matrix::from_columns(&columns)?
    };
    Ok(SynthSet {
        features,
        guiding_class: guiding,
        source_index: sources,
    })
}

/// Standard deviation of the few-shot semantic noise: `multiplier` times the
/// mean (over dimensions) population standard deviation of the prototypes.
pub fn fsl_noise_scale(prototypes: &Matrix, multiplier: f64) -> f64 {
    let (k, q) = prototypes.shape();
    if k == 0 || q == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for r in 0..k {
        let row = prototypes.row(r);
        let mean = row.iter().sum::<f64>() / q as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / q as f64;
        total += var.sqrt();
    }
    multiplier * total / k as f64
}

/// Synthesizes novel-class query features from the support shots.
///
/// For shot `x_i` of novel class `j` with shot mean `x̄_j`, emits
/// `fsl_copies_per_shot` samples `(x_i − x̄_j) + ρ W (y_j + ε) / ‖W‖_F²` with a
/// fresh Gaussian `ε` per copy.
pub fn synthesize_fsl(support: &SupportSet, w: &Matrix, cfg: &SynthConfig) -> Result<SynthSet> {
    cfg.validate()?;
    let (d, n) = support.features.shape();
    let (k, q) = support.prototypes.shape();
    if w.shape() != (d, k) {
        return Err(Error::dim(format!(
            "projection is {}x{}, expected {d}x{k}",
            w.rows(),
            w.cols()
        )));
    }
    if support.classes.len() != n {
        return Err(Error::dim("support classes and features differ in count"));
    }
    if n == 0 {
        return Err(Error::invalid("support set is empty"));
    }
    if let Some(&bad) = support.classes.iter().find(|&&c| c >= q) {
        return Err(Error::invalid(format!("support class {bad} out of range 0..{q}")));
    }
    let scale = step_scale(w, cfg.rho)?;
    let sigma = fsl_noise_scale(&support.prototypes, cfg.fsl_noise_sigma);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;

    let mut columns = Vec::new();
    let mut guiding = Vec::new();
    let mut sources = Vec::new();
    for j in 0..q {
        let shots: Vec<usize> = (0..n).filter(|&i| support.classes[i] == j).collect();
        if shots.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; d];
        for &i in &shots {
            for (m, r) in mean.iter_mut().zip(0..d) {
                *m += support.features[(r, i)];
            }
        }
        for m in &mut mean {
            *m /= shots.len() as f64;
        }
        let y_j = support.prototypes.column(j);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, j));
        for &i in &shots {
            for _ in 0..cfg.fsl_copies_per_shot {
                let guided: Vec<f64> = if sigma > 0.0 {
                    y_j.iter().map(|&y| y + noise.sample(&mut rng)).collect()
                } else {
                    y_j.clone()
                };
                let centre = w.matvec(&guided)?;
                let x: Vec<f64> = (0..d)
                    .map(|r| (support.features[(r, i)] - mean[r]) + scale * centre[r])
                    .collect();
                columns.push(x);
                guiding.push(j);
                sources.push(i);
            }
        }
    }
    Ok(SynthSet {
        features: Matrix::from_columns(&columns)?,
        guiding_class: guiding,
        source_index: sources,
    })
}
