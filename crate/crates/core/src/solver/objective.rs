use super::assemble::SeenStats;
use super::entropy::softmax_entropy;
use super::fit::CompetitiveProblem;
use super::weights::loss_matrix;
use super::{Mode, SolverConfig};
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::synth::SynthSet;

/// Synthesized-sample term of the objective for `mode`.
pub(crate) fn synth_term(f: &Matrix, guiding: &[usize], mode: Mode, mu: f64) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..f.rows() {
        let row = f.row(i);
        total += match mode {
            Mode::Full => {
                let (best, min) = argmin(row, None);
                let (_, runner_up) = argmin(row, Some(best));
                if !runner_up.is_finite() {
                    return Err(Error::NoRunnerUp { sample: i });
                }
                min - mu * runner_up
            }
            Mode::Bpl1 => argmin(row, None).1,
            Mode::NoAmbiguity => row[guiding[i]],
            Mode::Entropy => softmax_entropy(row).0,
            Mode::Bpl0 | Mode::Fpl | Mode::Rpl => 0.0,
        };
    }
    Ok(total)
}

fn argmin(row: &[f64], skip: Option<usize>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, &v) in row.iter().enumerate() {
        if Some(j) != skip && v < best.1 {
            best = (j, v);
        }
    }
    best
}

/// `S_base + γ(S_support + G_synth) + 2ν‖W‖²` with `γ = α_t/(1−α_t)`,
/// `ν = β/(1−α_t)`.
pub(crate) fn problem_objective(
    problem: &CompetitiveProblem<'_>,
    w: &Matrix,
    cfg: &SolverConfig,
    alpha_t: f64,
) -> Result<f64> {
    if !(alpha_t < 1.0) {
        return Err(Error::UndefinedGamma(alpha_t));
    }
    let gamma = alpha_t / (1.0 - alpha_t);
    let nu = cfg.beta / (1.0 - alpha_t);
    let mut value = problem.base.bidirectional_loss(w)? + 2.0 * nu * w.frobenius_norm_sq();
    if gamma > 0.0 {
        let mut target = 0.0;
        if let Some(s) = problem.support {
            target += s.bidirectional_loss(w)?;
        }
        if !problem.synth.is_empty() && cfg.mode.uses_synthesis() {
            let f = loss_matrix(w, &problem.synth.features, problem.prototypes)?;
            target += synth_term(&f, &problem.synth.guiding_class, cfg.mode, cfg.effective_mu())?;
        }
        value += gamma * target;
    }
    Ok(value)
}

/// Full training objective at `W`, for iteration weight `alpha_t`.
///
/// The synthesized term depends on `cfg.mode`: the best-match loss minus `μ`
/// times the runner-up loss (`full`), the best-match loss alone (`bpl1`), the
/// guiding-class loss (`no_ambiguity`) or the softmax entropy (`entropy`).
/// Modes that do not train on synthesized data contribute no such term.
pub fn objective_value(
    w: &Matrix,
    bundle: &DatasetBundle,
    synth: &SynthSet,
    cfg: &SolverConfig,
    alpha_t: f64,
) -> Result<f64> {
    if !(alpha_t < 1.0) {
        return Err(Error::UndefinedGamma(alpha_t));
    }
    let stats = SeenStats::from_bundle(bundle)?;
    let problem = CompetitiveProblem {
        base: &stats,
        support: None,
        synth,
        prototypes: &bundle.unseen_prototypes,
    };
    problem_objective(&problem, w, cfg, alpha_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitKind;

    fn bundle() -> DatasetBundle {
        DatasetBundle {
            seen_features: Matrix::from_rows(&[&[1.0, 0.5], &[2.0, -1.0]]),
            seen_labels: vec![0, 1],
            seen_prototypes: Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]),
            unseen_prototypes: Matrix::from_rows(&[&[1.0, -1.0], &[1.0, 1.0]]),
            test_features: None,
            test_labels: None,
            split_kind: SplitKind::PureZsl,
        }
    }

    #[test]
    fn zero_map_without_synth() {
        let b = bundle();
        let cfg = SolverConfig {
            beta: 1e-300,
            ..Default::default()
        };
        let v = objective_value(&Matrix::zeros(2, 2), &b, &SynthSet::empty(2), &cfg, 0.0).unwrap();
        // Σ ‖x‖² + ‖y‖²
        assert!((v - (5.0 + 1.25 + 1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn regularizer_adds_two_nu_norm() {
        let b = bundle();
        let w = Matrix::from_rows(&[&[0.3, 0.1], &[-0.2, 0.7]]);
        let lo = SolverConfig {
            beta: 1e-300,
            ..Default::default()
        };
        let hi = SolverConfig {
            beta: 0.25,
            ..Default::default()
        };
        let s = SynthSet::empty(2);
        let gap = objective_value(&w, &b, &s, &hi, 0.0).unwrap() - objective_value(&w, &b, &s, &lo, 0.0).unwrap();
        assert!((gap - 2.0 * 0.25 * w.frobenius_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn alpha_one_is_undefined() {
        let b = bundle();
        let r = objective_value(
            &Matrix::zeros(2, 2),
            &b,
            &SynthSet::empty(2),
            &SolverConfig::default(),
            1.0,
        );
        assert!(matches!(r, Err(Error::UndefinedGamma(_))));
    }

    #[test]
    fn synth_term_by_mode() {
        let f = Matrix::from_rows(&[&[3.0, 1.0, 2.0]]);
        assert_eq!(synth_term(&f, &[0], Mode::Full, 0.5).unwrap(), 0.0);
        assert_eq!(synth_term(&f, &[0], Mode::Bpl1, 0.5).unwrap(), 1.0);
        assert_eq!(synth_term(&f, &[0], Mode::NoAmbiguity, 0.5).unwrap(), 3.0);
        assert_eq!(synth_term(&f, &[0], Mode::Fpl, 0.5).unwrap(), 0.0);
    }
}
