//! Competitive bidirectional projection learning.
//!
//! A single matrix `W` (`d×k`) maps prototypes into feature space (`W y`) and
//! features back to semantic space (`Wᵀ x`). Each iteration linearizes the
//! best-match / runner-up minimum functions over the synthesized samples,
//! assembles the stationarity condition as a Sylvester equation and solves
//! it exactly.

mod assemble;
mod baselines;
mod entropy;
mod fit;
mod objective;
mod weights;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use assemble::{assemble_from_stats, assemble_normal_equations, NormalEquations, SeenStats, SynthTerms};
pub use baselines::{fit_fpl, fit_rpl};
pub use entropy::{entropy_gradient, entropy_objective, fit_entropy_baseline, EntropyStep, EntropyTrace};
pub(crate) use fit::fit_bpl0_from_stats;
pub use fit::{
    competitive_step, fit_bpl0, fit_competitive_bpl, run_competitive, solve_normal_equations, CompetitiveProblem,
    FitTrace, IterationRecord, StepOutcome,
};
pub use objective::objective_value;
pub use weights::{
    combine_delta, loss_matrix, min_gradient_eta, pinned_eta, row_argmin, second_min_gradient_xi, GradientWeights,
    ZERO_MIN_ABS_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Synthesis plus competitive learning (best match pulled, runner-up pushed).
    Full,
    /// Synthesis with best-match pull only (`μ = 0`).
    Bpl1,
    /// Seen classes only (`α = 0`), closed form.
    Bpl0,
    /// Forward projection only (features → semantics).
    Fpl,
    /// Reverse projection only (semantics → features).
    Rpl,
    /// Minimum-entropy competition, by gradient descent.
    Entropy,
    /// Synthesized samples keep their guiding class; no competition.
    NoAmbiguity,
}

impl Mode {
    /// Whether training consumes synthesized features.
    pub fn uses_synthesis(self) -> bool {
        matches!(self, Mode::Full | Mode::Bpl1 | Mode::Entropy | Mode::NoAmbiguity)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Bpl1 => "bpl1",
            Mode::Bpl0 => "bpl0",
            Mode::Fpl => "fpl",
            Mode::Rpl => "rpl",
            Mode::Entropy => "entropy",
            Mode::NoAmbiguity => "no_ambiguity",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Mode::Full,
            "bpl1" => Mode::Bpl1,
            "bpl0" => Mode::Bpl0,
            "fpl" => Mode::Fpl,
            "rpl" => Mode::Rpl,
            "entropy" => Mode::Entropy,
            "no_ambiguity" | "no-ambiguity" => Mode::NoAmbiguity,
            other => return Err(Error::invalid(format!("unknown mode {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Synthesized-data weight `α ∈ [0, 1)`; decays as `alpha_decay^t · α`.
    pub alpha: f64,
    /// Runner-up push strength `μ ∈ [0, 1)`.
    pub mu: f64,
    /// Ridge weight.
    pub beta: f64,
    /// Relative gap for the relaxed min-function gradients.
    pub epsilon: f64,
    pub alpha_decay: f64,
    pub max_iters: usize,
    /// Stop once `‖W⁽ᵗ⁺¹⁾ − W⁽ᵗ⁾‖_F / ‖W⁽ᵗ⁾‖_F` falls below this.
    pub rel_tol: f64,
    pub mode: Mode,
    pub entropy_lr: f64,
    pub entropy_steps: usize,
    /// L2-normalize features and prototypes before training and evaluation.
    pub normalize_inputs: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            mu: 0.1,
            beta: 0.01,
            epsilon: 0.001,
            alpha_decay: 0.99,
            max_iters: 5,
            rel_tol: 1e-4,
            mode: Mode::Full,
            entropy_lr: 1e-3,
            entropy_steps: 100,
            normalize_inputs: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::invalid(format!("mu must lie in [0, 1), got {}", self.mu)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_decay) {
            return Err(Error::invalid(format!(
                "alpha_decay must lie in [0, 1], got {}",
                self.alpha_decay
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol must be positive"));
        }
        if self.mode == Mode::Entropy && (!(self.entropy_lr > 0.0) || self.entropy_steps == 0) {
            return Err(Error::invalid(
                "entropy mode needs entropy_lr > 0 and entropy_steps >= 1",
            ));
        }
        Ok(())
    }

    /// `α_t = alpha_decay^t · α`.
    pub fn alpha_at(&self, t: usize) -> f64 {
        self.alpha_decay.powi(t as i32) * self.alpha
    }

    /// The `μ` actually applied: the ablations without a runner-up term use 0.
    pub fn effective_mu(&self) -> f64 {
        match self.mode {
            Mode::Full => self.mu,
            _ => 0.0,
        }
    }
}
