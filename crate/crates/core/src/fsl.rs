//! Episodic few-shot training.
//!
//! Base-class statistics are accumulated once. Each episode adds the support
//! shots and a freshly synthesized query set, runs the competitive iteration,
//! and the episode projections are averaged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, FslBundle, SupportSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::solver::{run_competitive, CompetitiveProblem, FitTrace, Mode, SeenStats, SolverConfig};
use crate::synth::{synthesize_fsl, SynthConfig, SynthSet};

/// `Σ x xᵀ`, `Σ y yᵀ`, `Σ x yᵀ` over every base sample.
pub type BaseStats = SeenStats;

pub fn precompute_base_stats(base: &DatasetBundle) -> Result<BaseStats> {
    if base.n_seen() == 0 {
        return Err(Error::invalid("no base samples"));
    }
    SeenStats::from_bundle(base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodePlan {
    /// Query-synthesis seed of each episode; its length is the episode count.
    pub seeds: Vec<u64>,
}

impl EpisodePlan {
    pub const DEFAULT_EPISODES: usize = 10;

    /// `episodes` episodes with seeds derived from `seed`.
    pub fn new(episodes: usize, seed: u64) -> Result<Self> {
        if episodes == 0 {
            return Err(Error::invalid("at least one episode is required"));
        }
        let seeds = (0..episodes as u64)
            .map(|h| seed.wrapping_add(h.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
            .collect();
        Ok(Self { seeds })
    }

    pub fn with_seeds(seeds: Vec<u64>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::invalid("at least one episode is required"));
        }
        Ok(Self { seeds })
    }

    pub fn episodes(&self) -> usize {
        self.seeds.len()
    }

    /// Synthesized query samples per episode: `q · K · copies`.
    pub fn query_size(support: &SupportSet, synth: &SynthConfig) -> usize {
        support.features.cols() * synth.fsl_copies_per_shot
    }
}

fn check_mode(cfg: &SolverConfig) -> Result<()> {
    if !matches!(cfg.mode, Mode::Full | Mode::Bpl1 | Mode::NoAmbiguity) {
        return Err(Error::invalid(format!(
            "few-shot episodes need a competitive mode, got {}",
            cfg.mode.name()
        )));
    }
    Ok(())
}

/// One episode: base statistics weighted by `1 − α_t`, support statistics and
/// the query term by `α_t`; competition runs over the query set against the
/// novel prototypes. Starts from the base-only solution.
pub fn run_episode(
    stats: &BaseStats,
    support: &SupportSet,
    query: &SynthSet,
    cfg: &SolverConfig,
) -> Result<(Matrix, FitTrace)> {
    check_mode(cfg)?;
    if support.features.cols() == 0 {
        return Err(Error::invalid("empty support set"));
    }
    if query.is_empty() {
        return Err(Error::invalid("empty query set"));
    }
    let (w0, _) = crate::solver::fit_bpl0_from_stats(stats, cfg.beta)?;
    let support_stats = SeenStats::from_pairs(&support.features, &support.label_prototypes())?;
    let problem = CompetitiveProblem {
        base: stats,
        support: Some(&support_stats),
        synth: query,
        prototypes: &support.prototypes,
    };
    let (w, _, trace) = run_competitive(&problem, w0, cfg, None)?;
    Ok((w, trace))
}

#[derive(Debug, Clone)]
pub struct FslFit {
    /// Mean of the episode projections.
    pub w: Matrix,
    pub traces: Vec<FitTrace>,
}

/// Runs every episode of `plan` and averages the projections in ascending
/// episode order. Episodes may run concurrently.
pub fn fit_fsl(fsl: &FslBundle, plan: &EpisodePlan, synth_cfg: &SynthConfig, cfg: &SolverConfig) -> Result<FslFit> {
    let stats = precompute_base_stats(&fsl.base)?;
    fit_fsl_with_stats(&stats, fsl, plan, synth_cfg, cfg)
}

pub fn fit_fsl_with_stats(
    stats: &BaseStats,
    fsl: &FslBundle,
    plan: &EpisodePlan,
    synth_cfg: &SynthConfig,
    cfg: &SolverConfig,
) -> Result<FslFit> {
    fsl.validate()?;
    cfg.validate()?;
    synth_cfg.validate()?;
    check_mode(cfg)?;
    let support = fsl.support_set();
    let (w0, _) = crate::solver::fit_bpl0_from_stats(stats, cfg.beta)?;
    let outcomes: Vec<Result<(Matrix, FitTrace)>> = plan
        .seeds
        .par_iter()
        .map(|&seed| {
            let episode_cfg = SynthConfig {
                seed,
                ..synth_cfg.clone()
            };
            let query = synthesize_fsl(&support, &w0, &episode_cfg)?;
            run_episode(stats, &support, &query, cfg)
        })
        .collect();

    let mut mean: Option<Matrix> = None;
    let mut traces = Vec::with_capacity(outcomes.len());
    for (h, outcome) in outcomes.into_iter().enumerate() {
        let (w, trace) = outcome.map_err(|e| Error::Episode {
            index: h,
            source: Box::new(e),
        })?;
        mean = Some(match mean {
            None => w,
            Some(mut m) => {
                // m ← m + (w − m)/(h+1): equal episodes leave m untouched.
                let scale = 1.0 / (h + 1) as f64;
                for (mv, &wv) in m.as_mut_slice().iter_mut().zip(w.as_slice()) {
                    *mv += (wv - *mv) * scale;
                }
                m
            }
        });
        traces.push(trace);
    }
    Ok(FslFit {
        w: mean.expect("plan has at least one episode"),
        traces,
    })
}
