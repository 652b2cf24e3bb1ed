//! Minimum-entropy competitive baseline, fitted by gradient descent.
//!
//! `E(W) = (1−α)·S(W) + 2β‖W‖² + α·Σ_i H(P(·|x_i))` where `S` is the seen
//! bidirectional loss and `P(j|x) ∝ exp(−f_j(x))` over the unseen classes.

use log::warn;
use serde::{Deserialize, Serialize};

use super::assemble::SeenStats;
use super::fit::fit_bpl0_from_stats;
use super::weights::loss_matrix;
use super::SolverConfig;
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::linalg::{accumulate_cross, accumulate_gram, Matrix};
use crate::synth::SynthSet;

const INCREASES_BEFORE_HALVING: usize = 5;
const MAX_HALVINGS: usize = 10;

/// Entropy of `softmax(−row)` and the probabilities themselves.
pub(crate) fn softmax_entropy(row: &[f64]) -> (f64, Vec<f64>) {
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = row.iter().map(|&f| (min - f).exp()).collect();
    let z: f64 = p.iter().sum();
    let mut h = 0.0;
    for v in &mut p {
        *v /= z;
        if *v > 0.0 {
            h -= *v * v.ln();
        }
    }
    (h, p)
}

/// `E(W)` for fixed synthesized features and candidate prototypes.
pub fn entropy_objective(
    w: &Matrix,
    stats: &SeenStats,
    synth_features: &Matrix,
    prototypes: &Matrix,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let mut e = (1.0 - alpha) * stats.bidirectional_loss(w)? + 2.0 * beta * w.frobenius_norm_sq();
    if alpha > 0.0 && synth_features.cols() > 0 {
        let f = loss_matrix(w, synth_features, prototypes)?;
        let h: f64 = (0..f.rows()).map(|i| softmax_entropy(f.row(i)).0).sum();
        e += alpha * h;
    }
    Ok(e)
}

/// Mean entropy of `P(·|x)` over the synthesized samples.
fn mean_entropy(w: &Matrix, synth_features: &Matrix, prototypes: &Matrix) -> Result<f64> {
    let n = synth_features.cols();
    if n == 0 {
        return Ok(0.0);
    }
    let f = loss_matrix(w, synth_features, prototypes)?;
    Ok((0..n).map(|i| softmax_entropy(f.row(i)).0).sum::<f64>() / n as f64)
}

/// Analytic gradient of [`entropy_objective`].
pub fn entropy_gradient(
    w: &Matrix,
    stats: &SeenStats,
    synth_features: &Matrix,
    prototypes: &Matrix,
    alpha: f64,
    beta: f64,
) -> Result<Matrix> {
    // ∇S = 2(AW + WB − 2C)
    let mut g = stats.xx.matmul(w)?;
    g.add_scaled(1.0, &w.matmul(&stats.yy)?)?;
    g.add_scaled(-2.0, &stats.xy)?;
    let mut grad = g.scale(2.0 * (1.0 - alpha));
    grad.add_scaled(4.0 * beta, w)?;

    let n = synth_features.cols();
    if alpha == 0.0 || n == 0 {
        return Ok(grad);
    }
    let (k, q) = prototypes.shape();
    let f = loss_matrix(w, synth_features, prototypes)?;
    // dH/df_j = P_j (log P_j + H); then Σ_j (dH/df_j) ∇f_j with
    // ∇f_j = 2x(Wᵀx − y_j)ᵀ + 2(W y_j − x) y_jᵀ.
    let mut row_mass = vec![0.0; n];
    let mut class_mass = vec![0.0; q];
    let mut targets = Matrix::zeros(k, n);
    for i in 0..n {
        let (h, p) = softmax_entropy(f.row(i));
        for j in 0..q {
            if p[j] == 0.0 {
                continue;
            }
            let gij = p[j] * (p[j].ln() + h);
            row_mass[i] += gij;
            class_mass[j] += gij;
            for r in 0..k {
                targets[(r, i)] += gij * prototypes[(r, j)];
            }
        }
    }
    let ax = accumulate_gram(synth_features, Some(&row_mass))?;
    let by = accumulate_gram(prototypes, Some(&class_mass))?;
    let cxy = accumulate_cross(synth_features, &targets, None)?;
    let mut h = ax.matmul(w)?;
    h.add_scaled(1.0, &w.matmul(&by)?)?;
    h.add_scaled(-2.0, &cxy)?;
    grad.add_scaled(2.0 * alpha, &h)?;
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyStep {
    pub step: usize,
    pub objective: f64,
    pub mean_entropy: f64,
    pub lr: f64,
    /// Whether the step lowered the objective.
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyTrace {
    pub initial_objective: f64,
    pub initial_entropy: f64,
    pub steps: Vec<EntropyStep>,
    pub halvings: usize,
}

/// Gradient descent on [`entropy_objective`] from the seen-only solution,
/// with `α` held at `cfg.alpha`.
///
/// After five consecutive increases of the objective the step size is halved
/// and descent restarts from the best iterate; more than ten halvings fail
/// with [`Error::StepSize`]. Returns the best iterate.
pub fn fit_entropy_baseline(
    bundle: &DatasetBundle,
    synth: &SynthSet,
    cfg: &SolverConfig,
) -> Result<(Matrix, EntropyTrace)> {
    let cfg = SolverConfig {
        mode: super::Mode::Entropy,
        ..cfg.clone()
    };
    cfg.validate()?;
    if bundle.n_seen() == 0 {
        return Err(Error::invalid("no seen samples to fit"));
    }
    let stats = SeenStats::from_bundle(bundle)?;
    let protos = &bundle.unseen_prototypes;
    let x = &synth.features;
    let (alpha, beta) = (cfg.alpha, cfg.beta);
    let (mut w, _) = fit_bpl0_from_stats(&stats, beta)?;

    let mut e = entropy_objective(&w, &stats, x, protos, alpha, beta)?;
    let mut trace = EntropyTrace {
        initial_objective: e,
        initial_entropy: mean_entropy(&w, x, protos)?,
        ..Default::default()
    };
    let mut best = (w.clone(), e);
    let mut lr = cfg.entropy_lr;
    let mut increases = 0;
    for step in 0..cfg.entropy_steps {
        let g = entropy_gradient(&w, &stats, x, protos, alpha, beta)?;
        let mut next = w.clone();
        next.add_scaled(-lr, &g)?;
        let e_next = if next.is_finite() {
            entropy_objective(&next, &stats, x, protos, alpha, beta)?
        } else {
            f64::INFINITY
        };
        let accepted = e_next < e;
        increases = if e_next > e || !e_next.is_finite() {
            increases + 1
        } else {
            0
        };
        trace.steps.push(EntropyStep {
            step,
            objective: e_next,
            mean_entropy: if e_next.is_finite() {
                mean_entropy(&next, x, protos)?
            } else {
                f64::NAN
            },
            lr,
            accepted,
        });
        if e_next < best.1 {
            best = (next.clone(), e_next);
        }
        w = next;
        e = e_next;
        if increases >= INCREASES_BEFORE_HALVING {
            trace.halvings += 1;
            if trace.halvings > MAX_HALVINGS {
                return Err(Error::StepSize(format!(
                    "objective kept increasing after {MAX_HALVINGS} step-size halvings (lr {lr:e})"
                )));
            }
            lr *= 0.5;
            warn!("entropy descent diverging; halving step size to {lr:e}");
            w = best.0.clone();
            e = best.1;
            increases = 0;
        }
    }
    Ok((best.0, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic_problem, SyntheticSpec};
    use crate::solver::fit_bpl0;
    use crate::synth::{synthesize_zsl, SynthConfig};

    #[test]
    fn softmax_entropy_uniform_and_peaked() {
        let (h, p) = softmax_entropy(&[2.0, 2.0, 2.0, 2.0]);
        assert!((h - 4f64.ln()).abs() < 1e-15);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let (h, _) = softmax_entropy(&[0.0, 800.0]);
        assert_eq!(h, 0.0);
    }

    fn setup() -> (DatasetBundle, SynthSet) {
        let spec = SyntheticSpec::new(8, 4, 5, 3, 10, 0.05, 2);
        let (bundle, _) = make_synthetic_problem(&spec).unwrap();
        let (w0, _) = fit_bpl0(&bundle, &SolverConfig::default()).unwrap();
        let synth = synthesize_zsl(&bundle, &w0, &SynthConfig::default()).unwrap();
        (bundle, synth)
    }

    #[test]
    fn zero_alpha_stays_at_bpl0() {
        let (bundle, synth) = setup();
        let cfg = SolverConfig {
            alpha: 0.0,
            mode: super::super::Mode::Entropy,
            ..Default::default()
        };
        let (w, _) = fit_entropy_baseline(&bundle, &synth, &cfg).unwrap();
        let (w0, _) = fit_bpl0(&bundle, &cfg).unwrap();
        assert!(w.max_abs_diff(&w0) < 1e-6);
    }

    #[test]
    fn descent_lowers_objective() {
        let (bundle, synth) = setup();
        let cfg = SolverConfig {
            alpha: 0.5,
            entropy_lr: 1e-3,
            entropy_steps: 50,
            ..Default::default()
        };
        let (_, trace) = fit_entropy_baseline(&bundle, &synth, &cfg).unwrap();
        let best = trace.steps.iter().map(|s| s.objective).fold(f64::INFINITY, f64::min);
        assert!(best <= trace.initial_objective);
    }

    #[test]
    fn huge_step_size_fails() {
        let (bundle, synth) = setup();
        let cfg = SolverConfig {
            alpha: 0.5,
            entropy_lr: 1e9,
            entropy_steps: 100,
            ..Default::default()
        };
        assert!(matches!(
            fit_entropy_baseline(&bundle, &synth, &cfg),
            Err(Error::StepSize(_))
        ));
    }
}
