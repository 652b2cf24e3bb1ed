//! Nearest-prototype classification and evaluation metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};

/// `D[i, j] = ‖x_i − W y_j‖²`.
pub fn prototype_distances(w: &Matrix, x: &Matrix, y: &Matrix) -> Result<Matrix> {
    let (d, k) = w.shape();
    if x.rows() != d || y.rows() != k {
        return Err(Error::dim(format!(
            "model is {d}x{k} but features have {} rows and prototypes {} rows",
            x.rows(),
            y.rows()
        )));
    }
    let projected = w.matmul(y)?;
    let centres: Vec<Vec<f64>> = (0..y.cols()).map(|j| projected.column(j)).collect();
    let mut out = Matrix::zeros(x.cols(), y.cols());
    for i in 0..x.cols() {
        let xi = x.column(i);
        for (j, c) in centres.iter().enumerate() {
            out[(i, j)] = squared_distance(&xi, c);
        }
    }
    Ok(out)
}

/// Index of the nearest projected prototype per column of `x`; ties go to
/// the lowest index.
pub fn classify_nearest_prototype(w: &Matrix, x: &Matrix, y: &Matrix) -> Result<Vec<usize>> {
    if y.cols() == 0 {
        return Err(Error::invalid("no prototypes to classify against"));
    }
    let dist = prototype_distances(w, x, y)?;
    Ok(crate::solver::row_argmin(&dist))
}

/// Mean over classes of per-class accuracy. Classes in `classes` without
/// any sample in `truth` are left out of the mean.
pub fn per_class_top1(pred: &[usize], truth: &[usize], classes: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("per-class accuracy of an empty test set".into()));
    }
    let mut counts: BTreeMap<usize, (usize, usize)> = classes.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &t) in pred.iter().zip(truth) {
        let entry = counts
            .get_mut(&t)
            .ok_or_else(|| Error::invalid(format!("label {t} is outside the evaluated class set")))?;
        entry.1 += 1;
        if p == t {
            entry.0 += 1;
        }
    }
    let rates: Vec<f64> = counts
        .values()
        .filter(|(_, total)| *total > 0)
        .map(|&(hit, total)| hit as f64 / total as f64)
        .collect();
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Fraction of samples whose true column is among the `k` smallest entries
/// of its distance row (flat, sample-averaged). Equal distances rank the
/// lower column first.
pub fn hit_at_k(distances: &Matrix, truth: &[usize], k: usize) -> Result<f64> {
    let (n, c) = distances.shape();
    if k == 0 || k > c {
        return Err(Error::invalid(format!("hit@{k} needs 1 <= k <= {c}")));
    }
    if truth.len() != n {
        return Err(Error::dim(format!("{} labels for {n} distance rows", truth.len())));
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("hit@k of an empty test set".into()));
    }
    let mut hits = 0;
    for (i, &t) in truth.iter().enumerate() {
        if t >= c {
            return Err(Error::invalid(format!("label {t} has no distance column")));
        }
        let row = distances.row(i);
        let ahead = (0..c)
            .filter(|&j| row[j] < row[t] || (row[j] == row[t] && j < t))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// `2ab / (a + b)`, or 0 when both are 0.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_top1: f64,
    /// Flat hit@k keyed by `k`.
    pub hit_at: BTreeMap<usize, f64>,
    pub acc_s: Option<f64>,
    pub acc_u: Option<f64>,
    pub hm: Option<f64>,
    /// `confusion[true][predicted]` sample counts, global class ids.
    pub confusion: BTreeMap<usize, BTreeMap<usize, usize>>,
}

fn confusion(pred: &[usize], truth: &[usize]) -> BTreeMap<usize, BTreeMap<usize, usize>> {
    let mut m: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *m.entry(t).or_default().entry(p).or_default() += 1;
    }
    m
}

/// Generalized-ZSL report: `acc_s` and `acc_u` are per-class accuracies over
/// the seen-origin and unseen-origin samples, classified among all classes.
/// A rate whose subset is empty is absent, and so is `hm` then.
pub fn generalized_report(
    pred: &[usize],
    truth: &[usize],
    seen_set: &[usize],
    unseen_set: &[usize],
) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let subset = |set: &[usize]| -> Result<Option<f64>> {
        let (p, t): (Vec<usize>, Vec<usize>) = pred
            .iter()
            .zip(truth)
            .filter(|(_, t)| set.contains(t))
            .map(|(&p, &t)| (p, t))
            .unzip();
        if t.is_empty() {
            Ok(None)
        } else {
            per_class_top1(&p, &t, set).map(Some)
        }
    };
    let acc_s = subset(seen_set)?;
    let acc_u = subset(unseen_set)?;
    let all: Vec<usize> = seen_set.iter().chain(unseen_set).copied().collect();
    let overall = per_class_top1(pred, truth, &all)?;
    let hm = match (acc_s, acc_u) {
        (Some(s), Some(u)) => Some(harmonic_mean(s, u)),
        _ => None,
    };
    let flat = pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64;
    Ok(MetricsReport {
        per_class_top1: overall,
        hit_at: BTreeMap::from([(1, flat)]),
        acc_s,
        acc_u,
        hm,
        confusion: confusion(pred, truth),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Unseen-origin test samples against unseen prototypes only.
    Pure,
    /// All test samples against seen and unseen prototypes.
    Generalized,
    /// As `Pure`, reporting flat hit@k for the requested `k`.
    HitAtK,
}

/// Evaluates `w` on the bundle's test split. Hit@1 is always reported;
/// `ks` adds further cut-offs.
pub fn evaluate_bundle(w: &Matrix, bundle: &DatasetBundle, protocol: Protocol, ks: &[usize]) -> Result<MetricsReport> {
    let (x, labels) = match (&bundle.test_features, &bundle.test_labels) {
        (Some(x), Some(l)) => (x, l),
        _ => return Err(Error::invalid("bundle has no test split")),
    };
    let (p, q) = (bundle.p(), bundle.q());
    match protocol {
        Protocol::Generalized => {
            let protos = bundle.all_prototypes();
            let dist = prototype_distances(w, x, &protos)?;
            let pred = crate::solver::row_argmin(&dist);
            let seen: Vec<usize> = (0..p).collect();
            let unseen: Vec<usize> = (p..p + q).collect();
            let mut report = generalized_report(&pred, labels, &seen, &unseen)?;
            for &k in ks {
                report.hit_at.insert(k, hit_at_k(&dist, labels, k)?);
            }
            Ok(report)
        }
        Protocol::Pure | Protocol::HitAtK => {
            let keep: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] >= p).collect();
            if keep.is_empty() {
                return Err(Error::UndefinedMetric("no unseen-class test samples".into()));
            }
            let xu = x.select_columns(&keep);
            let truth: Vec<usize> = keep.iter().map(|&i| labels[i] - p).collect();
            let dist = prototype_distances(w, &xu, &bundle.unseen_prototypes)?;
            let local = crate::solver::row_argmin(&dist);
            let classes: Vec<usize> = (0..q).collect();
            let mut hit_at = BTreeMap::new();
            hit_at.insert(1, hit_at_k(&dist, &truth, 1)?);
            for &k in ks {
                hit_at.insert(k, hit_at_k(&dist, &truth, k)?);
            }
            let global_pred: Vec<usize> = local.iter().map(|&c| c + p).collect();
            let global_truth: Vec<usize> = truth.iter().map(|&c| c + p).collect();
            Ok(MetricsReport {
                per_class_top1: per_class_top1(&local, &truth, &classes)?,
                hit_at,
                acc_s: None,
                acc_u: None,
                hm: None,
                confusion: confusion(&global_pred, &global_truth),
            })
        }
    }
}
