//! The alternating competitive iteration and its seen-only initializer.

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use super::assemble::{assemble_from_stats, NormalEquations, SeenStats, SynthTerms};
use super::objective::problem_objective;
use super::weights::{
    combine_delta, loss_matrix, min_gradient_eta, pinned_eta, row_argmin, second_min_gradient_xi, GradientWeights,
};
use super::{Mode, SolverConfig};
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::linalg::{solve_sylvester, sylvester_residual, Matrix};
use crate::synth::SynthSet;

const MAX_BETA_ESCALATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub alpha_t: f64,
    /// Ridge weight of the solve that produced this iterate (after any escalation).
    pub beta_used: f64,
    pub objective: f64,
    /// `‖W⁽ᵗ⁺¹⁾ − W⁽ᵗ⁾‖_F / ‖W⁽ᵗ⁾‖_F`; absent for the closed-form initializer.
    pub rel_change: Option<f64>,
    /// Synthesized samples whose nearest class changed since the previous iterate.
    pub label_changes: usize,
    /// `‖ÂW + WB̂ − Ĉ‖_F` of the solved system.
    pub residual: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub records: Vec<IterationRecord>,
}

impl FitTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses JSON lines; blank lines are skipped. Errors name the 1-based line.
    pub fn from_json_lines(text: &str) -> std::result::Result<Self, String> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: IterationRecord = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            records.push(r);
        }
        Ok(Self { records })
    }
}

/// Solves `ÂW + WB̂ = Ĉ`. If the pencil is singular, the ridge on both
/// coefficients is raised tenfold (for this solve only), at most three times.
///
/// Returns the solution and the ridge weight finally used.
pub fn solve_normal_equations(ne: &NormalEquations, beta: f64) -> Result<(Matrix, f64)> {
    let mut beta_used = beta;
    let mut a = ne.a.clone();
    let mut b = ne.b.clone();
    let mut escalations = 0;
    loop {
        match solve_sylvester(&a, &b, &ne.c) {
            Ok(w) => return Ok((w, beta_used)),
            Err(Error::SingularPencil(msg)) if escalations < MAX_BETA_ESCALATIONS => {
                let raised = beta_used * 10.0;
                warn!("{msg}; retrying with beta {raised:e}");
                a.add_diagonal(raised - beta_used);
                b.add_diagonal(raised - beta_used);
                beta_used = raised;
                escalations += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn residual_with_beta(ne: &NormalEquations, beta: f64, beta_used: f64, w: &Matrix) -> f64 {
    if beta_used == beta {
        return sylvester_residual(&ne.a, &ne.b, w, &ne.c);
    }
    let mut a = ne.a.clone();
    let mut b = ne.b.clone();
    a.add_diagonal(beta_used - beta);
    b.add_diagonal(beta_used - beta);
    sylvester_residual(&a, &b, w, &ne.c)
}

fn check_bundle_config(bundle: &DatasetBundle, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if bundle.n_seen() == 0 {
        return Err(Error::invalid("no seen samples to fit"));
    }
    Ok(())
}

/// Seen-only bidirectional model: one Sylvester solve at `α = 0`.
pub fn fit_bpl0(bundle: &DatasetBundle, cfg: &SolverConfig) -> Result<(Matrix, FitTrace)> {
    check_bundle_config(bundle, cfg)?;
    let stats = SeenStats::from_bundle(bundle)?;
    fit_bpl0_from_stats(&stats, cfg.beta)
}

pub(crate) fn fit_bpl0_from_stats(stats: &SeenStats, beta: f64) -> Result<(Matrix, FitTrace)> {
    let start = Instant::now();
    let ne = assemble_from_stats(stats, None, None, 0.0, beta)?;
    let (w, beta_used) = solve_normal_equations(&ne, beta)?;
    let residual = residual_with_beta(&ne, beta, beta_used, &w);
    let objective = stats.bidirectional_loss(&w)? + 2.0 * beta * w.frobenius_norm_sq();
    let record = IterationRecord {
        iteration: 0,
        alpha_t: 0.0,
        beta_used,
        objective,
        rel_change: None,
        label_changes: 0,
        residual,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((w, FitTrace { records: vec![record] }))
}

/// Everything the competitive iteration needs, independent of ZSL vs FSL.
#[derive(Clone, Copy)]
pub struct CompetitiveProblem<'a> {
    /// Labelled statistics weighted by `1 − α_t`.
    pub base: &'a SeenStats,
    /// Labelled target-class statistics weighted by `α_t` (FSL support set).
    pub support: Option<&'a SeenStats>,
    /// Synthesized samples; `guiding_class` indexes columns of `prototypes`.
    pub synth: &'a SynthSet,
    /// `k×q` candidate prototypes.
    pub prototypes: &'a Matrix,
}

impl CompetitiveProblem<'_> {
    fn check(&self, cfg: &SolverConfig) -> Result<()> {
        let (d, k) = (self.base.d(), self.base.k());
        if self.synth.features.rows() != d || self.prototypes.rows() != k {
            return Err(Error::dim(format!(
                "synthesized features have {} rows and prototypes {} rows, expected {d} and {k}",
                self.synth.features.rows(),
                self.prototypes.rows()
            )));
        }
        if let Some(s) = self.support {
            if s.d() != d || s.k() != k {
                return Err(Error::dim("support statistics do not match base dimensions"));
            }
        }
        let q = self.prototypes.cols();
        if cfg.mode == Mode::Full && q < 2 {
            return Err(Error::invalid(format!(
                "competitive mode needs at least 2 candidate classes, got {q}"
            )));
        }
        if self.synth.guiding_class.len() != self.synth.len() || self.synth.guiding_class.iter().any(|&g| g >= q) {
            return Err(Error::invalid("guiding classes do not index the candidate prototypes"));
        }
        Ok(())
    }
}

/// Result of one competitive update.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub w: Matrix,
    /// Weights computed at the incoming iterate.
    pub weights: GradientWeights,
    /// Nearest candidate class per synthesized sample at the incoming iterate.
    pub assignment: Vec<usize>,
    pub normal_equations: NormalEquations,
    pub beta_used: f64,
    pub residual: f64,
}

/// Linearizes the min functions at `w`, assembles and solves one system.
pub fn competitive_step(
    problem: &CompetitiveProblem<'_>,
    w: &Matrix,
    alpha_t: f64,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    let q = problem.prototypes.cols();
    let n = problem.synth.len();
    let f = loss_matrix(w, &problem.synth.features, problem.prototypes)?;
    let assignment = row_argmin(&f);
    let mu = cfg.effective_mu();
    let weights = match cfg.mode {
        Mode::Full => {
            let (eta, sets) = min_gradient_eta(&f, cfg.epsilon);
            let xi = second_min_gradient_xi(&f, &sets, cfg.epsilon)?;
            let delta = combine_delta(&eta, &xi, mu);
            GradientWeights { eta, xi, delta }
        }
        Mode::Bpl1 => {
            let (eta, _) = min_gradient_eta(&f, cfg.epsilon);
            GradientWeights {
                delta: eta.clone(),
                eta,
                xi: Matrix::zeros(n, q),
            }
        }
        Mode::NoAmbiguity => {
            let eta = pinned_eta(&problem.synth.guiding_class, q)?;
            GradientWeights {
                delta: eta.clone(),
                eta,
                xi: Matrix::zeros(n, q),
            }
        }
        other => {
            return Err(Error::invalid(format!(
                "mode {} is not fitted by the competitive iteration",
                other.name()
            )))
        }
    };
    let terms = SynthTerms {
        features: &problem.synth.features,
        prototypes: problem.prototypes,
        delta: &weights.delta,
        feature_weight: 1.0 - mu,
    };
    let ne = assemble_from_stats(problem.base, problem.support, Some(&terms), alpha_t, cfg.beta)?;
    let (w_next, beta_used) = solve_normal_equations(&ne, cfg.beta)?;
    let residual = residual_with_beta(&ne, cfg.beta, beta_used, &w_next);
    Ok(StepOutcome {
        w: w_next,
        weights,
        assignment,
        normal_equations: ne,
        beta_used,
        residual,
    })
}

/// Runs the competitive iteration from `w0` until `max_iters` updates or a
/// relative change below `rel_tol`. `observe` sees every step as it happens.
pub fn run_competitive(
    problem: &CompetitiveProblem<'_>,
    w0: Matrix,
    cfg: &SolverConfig,
    mut observe: Option<&mut dyn FnMut(usize, &StepOutcome)>,
) -> Result<(Matrix, GradientWeights, FitTrace)> {
    cfg.validate()?;
    problem.check(cfg)?;
    let mut w = w0;
    let mut trace = FitTrace::default();
    let mut previous: Vec<usize> = problem.synth.guiding_class.clone();
    let mut last_weights = None;
    for t in 0..cfg.max_iters {
        let start = Instant::now();
        let alpha_t = cfg.alpha_at(t);
        let step = competitive_step(problem, &w, alpha_t, cfg)?;
        if let Some(f) = observe.as_mut() {
            f(t, &step);
        }
        let label_changes = previous.iter().zip(&step.assignment).filter(|(a, b)| a != b).count();
        let norm = w.frobenius_norm();
        let rel_change = if norm > 0.0 {
            frob_diff(&step.w, &w) / norm
        } else {
            f64::INFINITY
        };
        let objective = problem_objective(problem, &step.w, cfg, alpha_t)?;
        trace.records.push(IterationRecord {
            iteration: t + 1,
            alpha_t,
            beta_used: step.beta_used,
            objective,
            rel_change: Some(rel_change),
            label_changes,
            residual: step.residual,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        let StepOutcome {
            w: w_next,
            weights,
            assignment,
            ..
        } = step;
        previous = assignment;
        w = w_next;
        last_weights = Some(weights);
        if rel_change < cfg.rel_tol {
            break;
        }
    }
    if w.frobenius_norm() == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    Ok((w, last_weights.expect("max_iters >= 1"), trace))
}

fn frob_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Competitive bidirectional projection learning over a synthesized set:
/// initializes with [`fit_bpl0`] and iterates in `cfg.mode`
/// (`full`, `bpl1` or `no_ambiguity`).
pub fn fit_competitive_bpl(
    bundle: &DatasetBundle,
    synth: &SynthSet,
    cfg: &SolverConfig,
) -> Result<(Matrix, GradientWeights, FitTrace)> {
    check_bundle_config(bundle, cfg)?;
    if !matches!(cfg.mode, Mode::Full | Mode::Bpl1 | Mode::NoAmbiguity) {
        return Err(Error::invalid(format!(
            "mode {} is not a competitive mode",
            cfg.mode.name()
        )));
    }
    let stats = SeenStats::from_bundle(bundle)?;
    let (w0, _) = fit_bpl0_from_stats(&stats, cfg.beta)?;
    let problem = CompetitiveProblem {
        base: &stats,
        support: None,
        synth,
        prototypes: &bundle.unseen_prototypes,
    };
    run_competitive(&problem, w0, cfg, None)
}
