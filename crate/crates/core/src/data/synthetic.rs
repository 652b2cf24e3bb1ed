//! Seeded desk-scale problems with a known linear semantic-to-visual map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::bundle::{normalize_columns, DatasetBundle, FslBundle, SplitKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub k: usize,
    pub p: usize,
    pub q: usize,
    /// Training samples per seen class and test samples per unseen class.
    pub samples_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Held-out seen-class test samples per seen class; a positive value
    /// produces a generalized split.
    #[serde(default)]
    pub seen_test_per_class: usize,
}

impl SyntheticSpec {
    pub fn new(d: usize, k: usize, p: usize, q: usize, samples_per_class: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            d,
            k,
            p,
            q,
            samples_per_class,
            noise_sigma,
            seed,
            seen_test_per_class: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d", self.d),
            ("k", self.k),
            ("p", self.p),
            ("q", self.q),
            ("samples_per_class", self.samples_per_class),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid(format!(
                "noise_sigma must be a finite non-negative number, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

struct Generator {
    rng: ChaCha8Rng,
    w: Matrix,
    prototypes: Matrix,
    noise: f64,
}

impl Generator {
    fn new(spec: &SyntheticSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let classes = spec.p + spec.q;
        let mut prototypes = gaussian(&mut rng, spec.k, classes, 1.0);
        normalize_columns(&mut prototypes);
        // Entry variance 1/d keeps projected class centres near unit norm.
        let w = gaussian(&mut rng, spec.d, spec.k, 1.0 / (spec.d as f64).sqrt());
        Self {
            rng,
            w,
            prototypes,
            noise: spec.noise_sigma,
        }
    }

    /// `count` samples of global class `class`, appended column-wise.
    fn samples(&mut self, class: usize, count: usize, cols: &mut Vec<Vec<f64>>, labels: &mut Vec<usize>) {
        let centre = self.w.matvec(&self.prototypes.column(class)).expect("W*y dims");
        for _ in 0..count {
            let x = centre
                .iter()
                .map(|&c| {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    c + self.noise * z
                })
                .collect();
            cols.push(x);
            labels.push(class);
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    Matrix::from_vec_unchecked(rows, cols, data)
}

fn columns_to_matrix(d: usize, cols: &[Vec<f64>]) -> Matrix {
    if cols.is_empty() {
        return Matrix::zeros(d, 0);
    }
    Matrix::from_columns(cols).expect("uniform columns")
}

/// Draws a ZSL problem whose features are `W*·y_class + σ·noise`.
///
/// Seen classes are the first `p` prototype columns, unseen the last `q`.
/// Returns the bundle and the ground-truth map `W*` (`d×k`).
pub fn make_synthetic_problem(spec: &SyntheticSpec) -> Result<(DatasetBundle, Matrix)> {
    spec.validate()?;
    let mut g = Generator::new(spec);
    let (p, q) = (spec.p, spec.q);

    let (mut train, mut train_labels) = (Vec::new(), Vec::new());
    for c in 0..p {
        g.samples(c, spec.samples_per_class, &mut train, &mut train_labels);
    }
    let (mut test, mut test_labels) = (Vec::new(), Vec::new());
    for c in p..p + q {
        g.samples(c, spec.samples_per_class, &mut test, &mut test_labels);
    }
    for c in 0..p {
        g.samples(c, spec.seen_test_per_class, &mut test, &mut test_labels);
    }

    let bundle = DatasetBundle {
        seen_features: columns_to_matrix(spec.d, &train),
        seen_labels: train_labels,
        seen_prototypes: g.prototypes.select_columns(&(0..p).collect::<Vec<_>>()),
        unseen_prototypes: g.prototypes.select_columns(&(p..p + q).collect::<Vec<_>>()),
        test_features: Some(columns_to_matrix(spec.d, &test)),
        test_labels: Some(test_labels),
        split_kind: if spec.seen_test_per_class > 0 {
            SplitKind::GeneralizedZsl
        } else {
            SplitKind::PureZsl
        },
    };
    bundle.validate()?;
    Ok((bundle, g.w))
}

/// Draws a few-shot problem: `p` base classes with `samples_per_class`
/// training samples, `q` novel classes with `shots` support samples and
/// `samples_per_class` test samples each.
pub fn make_synthetic_fsl(spec: &SyntheticSpec, shots: usize) -> Result<(FslBundle, Matrix)> {
    spec.validate()?;
    if shots == 0 {
        return Err(Error::invalid("shots must be positive"));
    }
    let mut g = Generator::new(spec);
    let (p, q) = (spec.p, spec.q);

    let (mut train, mut train_labels) = (Vec::new(), Vec::new());
    for c in 0..p {
        g.samples(c, spec.samples_per_class, &mut train, &mut train_labels);
    }
    let (mut support, mut support_labels) = (Vec::new(), Vec::new());
    for c in p..p + q {
        g.samples(c, shots, &mut support, &mut support_labels);
    }
    let (mut test, mut test_labels) = (Vec::new(), Vec::new());
    for c in p..p + q {
        g.samples(c, spec.samples_per_class, &mut test, &mut test_labels);
    }

    let base = DatasetBundle {
        seen_features: columns_to_matrix(spec.d, &train),
        seen_labels: train_labels,
        seen_prototypes: g.prototypes.select_columns(&(0..p).collect::<Vec<_>>()),
        unseen_prototypes: g.prototypes.select_columns(&(p..p + q).collect::<Vec<_>>()),
        test_features: Some(columns_to_matrix(spec.d, &test)),
        test_labels: Some(test_labels),
        split_kind: SplitKind::Fsl,
    };
    let fsl = FslBundle {
        base,
        support_features: columns_to_matrix(spec.d, &support),
        support_labels,
    };
    fsl.validate()?;
    Ok((fsl, g.w))
}
