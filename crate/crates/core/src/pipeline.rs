//! End-to-end training, evaluation and tuning, shared by the command line
//! and by callers who want the same results without spawning it.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::format::{read_labels, read_matrix, write_labels, write_matrix};
use crate::data::{class_cv_splits, DatasetBundle, FslBundle};
use crate::error::{Error, Result};
use crate::fsl::{fit_fsl, EpisodePlan, FslFit};
use crate::linalg::Matrix;
use crate::metrics::{evaluate_bundle, MetricsReport, Protocol};
use crate::solver::{
    entropy_gradient, fit_bpl0, fit_entropy_baseline, fit_fpl, fit_rpl, objective_value, run_competitive,
    CompetitiveProblem, EntropyTrace, FitTrace, IterationRecord, Mode, SeenStats, SolverConfig,
};
use crate::synth::{synthesize_zsl, SynthConfig, SynthSet};

/// Grid searched by class-wise cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneGrid {
    pub rho_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub mu_values: Vec<f64>,
    pub folds: usize,
}

impl Default for TuneGrid {
    fn default() -> Self {
        let v = vec![0.1, 0.3, 0.5, 0.7, 0.9];
        Self {
            rho_values: v.clone(),
            alpha_values: v.clone(),
            mu_values: v,
            folds: 3,
        }
    }
}

impl TuneGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, values) in [
            ("rho", &self.rho_values),
            ("alpha", &self.alpha_values),
            ("mu", &self.mu_values),
        ] {
            if values.is_empty() {
                return Err(Error::invalid(format!("{name} grid is empty")));
            }
            if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
                return Err(Error::invalid(format!("{name} grid value {v} is outside (0, 1)")));
            }
        }
        if self.folds < 2 {
            return Err(Error::invalid(format!("folds must be at least 2, got {}", self.folds)));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.rho_values.len() * self.alpha_values.len() * self.mu_values.len()
    }

    /// Grid points in lexicographic `(ρ, α, μ)` order.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let sorted = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s.dedup();
            s
        };
        let (r, a, m) = (
            sorted(&self.rho_values),
            sorted(&self.alpha_values),
            sorted(&self.mu_values),
        );
        let mut out = Vec::with_capacity(r.len() * a.len() * m.len());
        for &rho in &r {
            for &alpha in &a {
                for &mu in &m {
                    out.push((rho, alpha, mu));
                }
            }
        }
        out
    }
}

/// Everything a command needs besides paths. Stored as JSON; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub synth: SynthConfig,
    /// Few-shot episodes.
    pub episodes: usize,
    /// Few-shot shots per novel class; all available when absent.
    pub shots: Option<usize>,
    pub grid: TuneGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            synth: SynthConfig::default(),
            episodes: EpisodePlan::DEFAULT_EPISODES,
            shots: None,
            grid: TuneGrid::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.synth.validate()?;
        if self.episodes == 0 {
            return Err(Error::invalid("episodes must be at least 1"));
        }
        if self.shots == Some(0) {
            return Err(Error::invalid("shots must be at least 1"));
        }
        self.grid.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn prepared(bundle: &DatasetBundle, solver: &SolverConfig) -> DatasetBundle {
    if solver.normalize_inputs {
        bundle.l2_normalized()
    } else {
        bundle.clone()
    }
}

/// Result of a ZSL training run.
#[derive(Debug, Clone)]
pub struct ZslRun {
    pub w: Matrix,
    /// Initializer record followed by one record per competitive iteration.
    pub trace: FitTrace,
    /// Projection after each trace record, in the same order.
    pub iterates: Vec<Matrix>,
    pub synth: Option<SynthSet>,
    pub entropy: Option<EntropyTrace>,
}

fn single_direction_record(stats: &SeenStats, w: &Matrix, beta: f64, forward: bool) -> Result<IterationRecord> {
    // Objective Σ‖Wᵀx − y‖² + β‖W‖² (forward) or Σ‖x − Wy‖² + β‖W‖² (reverse),
    // and the residual of its normal equations.
    let tr_a: f64 = (0..stats.d()).map(|i| stats.xx[(i, i)]).sum();
    let tr_b: f64 = (0..stats.k()).map(|i| stats.yy[(i, i)]).sum();
    let cross: f64 = w.as_slice().iter().zip(stats.xy.as_slice()).map(|(a, b)| a * b).sum();
    let (quad, mut grad) = if forward {
        let aw = stats.xx.matmul(w)?;
        (
            w.as_slice().iter().zip(aw.as_slice()).map(|(a, b)| a * b).sum::<f64>() + tr_b,
            aw,
        )
    } else {
        let wb = w.matmul(&stats.yy)?;
        (
            w.as_slice().iter().zip(wb.as_slice()).map(|(a, b)| a * b).sum::<f64>() + tr_a,
            wb,
        )
    };
    grad.add_scaled(beta, w)?;
    grad.add_scaled(-1.0, &stats.xy)?;
    Ok(IterationRecord {
        iteration: 0,
        alpha_t: 0.0,
        beta_used: beta,
        objective: quad - 2.0 * cross + beta * w.frobenius_norm_sq(),
        rel_change: None,
        label_changes: 0,
        residual: grad.frobenius_norm(),
        wall_ms: 0.0,
    })
}

/// ZSL pipeline: seen-only initializer, synthesis with that projection, then
/// the fit selected by `cfg.solver.mode`.
pub fn train_zsl(bundle: &DatasetBundle, cfg: &RunConfig) -> Result<ZslRun> {
    cfg.validate()?;
    bundle.validate()?;
    let data = prepared(bundle, &cfg.solver);
    let solver = &cfg.solver;
    match solver.mode {
        Mode::Fpl | Mode::Rpl => {
            let forward = solver.mode == Mode::Fpl;
            let w = if forward {
                fit_fpl(&data, solver)?
            } else {
                fit_rpl(&data, solver)?
            };
            let stats = SeenStats::from_bundle(&data)?;
            let record = single_direction_record(&stats, &w, solver.beta, forward)?;
            return Ok(ZslRun {
                iterates: vec![w.clone()],
                w,
                trace: FitTrace { records: vec![record] },
                synth: None,
                entropy: None,
            });
        }
        _ => {}
    }

    let (w0, init) = fit_bpl0(&data, solver)?;
    if solver.mode == Mode::Bpl0 {
        return Ok(ZslRun {
            iterates: vec![w0.clone()],
            w: w0,
            trace: init,
            synth: None,
            entropy: None,
        });
    }

    let synth = synthesize_zsl(&data, &w0, &cfg.synth)?;
    info!("synthesized {} samples for {} unseen classes", synth.len(), data.q());
    if solver.mode == Mode::Entropy {
        let (w, etrace) = fit_entropy_baseline(&data, &synth, solver)?;
        let mut trace = init;
        trace.records.push(IterationRecord {
            iteration: 1,
            alpha_t: solver.alpha,
            beta_used: solver.beta,
            objective: objective_value(&w, &data, &synth, solver, solver.alpha)?,
            rel_change: Some(frob_diff(&w, &w0) / w0.frobenius_norm()),
            label_changes: 0,
            residual: entropy_gradient(
                &w,
                &SeenStats::from_bundle(&data)?,
                &synth.features,
                &data.unseen_prototypes,
                solver.alpha,
                solver.beta,
            )?
            .frobenius_norm(),
            wall_ms: 0.0,
        });
        return Ok(ZslRun {
            iterates: vec![w0, w.clone()],
            w,
            trace,
            synth: Some(synth),
            entropy: Some(etrace),
        });
    }

    let stats = SeenStats::from_bundle(&data)?;
    let problem = CompetitiveProblem {
        base: &stats,
        support: None,
        synth: &synth,
        prototypes: &data.unseen_prototypes,
    };
    let mut iterates = vec![w0.clone()];
    let mut keep = |_: usize, step: &crate::solver::StepOutcome| iterates.push(step.w.clone());
    let (w, _, comp) = run_competitive(&problem, w0, solver, Some(&mut keep))?;
    let mut trace = init;
    trace.records.extend(comp.records);
    Ok(ZslRun {
        w,
        trace,
        iterates,
        synth: Some(synth),
        entropy: None,
    })
}

fn frob_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Few-shot pipeline over `cfg.episodes` episodes seeded from `cfg.synth.seed`.
pub fn train_fsl(fsl: &FslBundle, cfg: &RunConfig) -> Result<FslFit> {
    cfg.validate()?;
    let mut data = match cfg.shots {
        Some(k) => fsl.with_shots(k)?,
        None => fsl.clone(),
    };
    if cfg.solver.normalize_inputs {
        data.base = data.base.l2_normalized();
        crate::data::normalize_columns(&mut data.support_features);
    }
    let plan = EpisodePlan::new(cfg.episodes, cfg.synth.seed)?;
    fit_fsl(&data, &plan, &cfg.synth, &cfg.solver)
}

/// Evaluates `w` on the bundle's test split under the same input
/// normalization the model was trained with.
pub fn evaluate(
    w: &Matrix,
    bundle: &DatasetBundle,
    normalize: bool,
    protocol: Protocol,
    ks: &[usize],
) -> Result<MetricsReport> {
    let data = if normalize {
        bundle.l2_normalized()
    } else {
        bundle.clone()
    };
    evaluate_bundle(w, &data, protocol, ks)
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneCell {
    pub rho: f64,
    pub alpha: f64,
    pub mu: f64,
    /// Mean validation per-class top-1, absent when any fold failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    /// Cells in lexicographic `(ρ, α, μ)` order.
    pub cells: Vec<TuneCell>,
    /// Highest-scoring cell; ties go to the lexicographically smallest triple.
    pub best: Option<(f64, f64, f64)>,
}

impl TuneResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["rho", "alpha", "mu", "score", "status"]).map_err(io)?;
        for c in &self.cells {
            let score = c.score.map(|s| format!("{s}")).unwrap_or_default();
            let status = c.error.clone().unwrap_or_else(|| "ok".into());
            w.write_record([c.rho.to_string(), c.alpha.to_string(), c.mu.to_string(), score, status])
                .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Grids above this many cells need an explicit override.
pub const MAX_TUNE_CELLS: usize = 500;

/// Scores every grid point with `score`, on up to `jobs` threads. Failed
/// cells are kept in the table and excluded from the argmax.
pub fn tune_cells<F>(grid: &TuneGrid, jobs: usize, force: bool, score: F) -> Result<TuneResult>
where
    F: Fn(f64, f64, f64) -> Result<f64> + Sync,
{
    grid.validate()?;
    let points = grid.points();
    if points.len() > MAX_TUNE_CELLS && !force {
        return Err(Error::Size(format!(
            "grid has {} cells (limit {MAX_TUNE_CELLS}); pass --force to run it",
            points.len()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let cells: Vec<TuneCell> = pool.install(|| {
        points
            .par_iter()
            .map(|&(rho, alpha, mu)| match score(rho, alpha, mu) {
                Ok(s) => TuneCell {
                    rho,
                    alpha,
                    mu,
                    score: Some(s),
                    error: None,
                },
                Err(e) => {
                    warn!("cell rho={rho} alpha={alpha} mu={mu} failed: {e}");
                    TuneCell {
                        rho,
                        alpha,
                        mu,
                        score: None,
                        error: Some(e.kind().to_string()),
                    }
                }
            })
            .collect()
    });
    let mut best: Option<(f64, (f64, f64, f64))> = None;
    for c in &cells {
        if let Some(s) = c.score {
            if best.map_or(true, |(b, _)| s > b) {
                best = Some((s, (c.rho, c.alpha, c.mu)));
            }
        }
    }
    Ok(TuneResult {
        cells,
        best: best.map(|(_, t)| t),
    })
}

/// Class-wise cross-validation of `(ρ, α, μ)` on the seen classes: each
/// cell trains the full pipeline per fold and scores pure-ZSL per-class
/// top-1 on the held-out classes.
pub fn tune(bundle: &DatasetBundle, cfg: &RunConfig, jobs: usize, force: bool) -> Result<TuneResult> {
    cfg.validate()?;
    let splits = class_cv_splits(bundle, cfg.grid.folds, cfg.synth.seed)?;
    let folds: Vec<DatasetBundle> = splits.iter().map(|s| s.materialize(bundle)).collect::<Result<_>>()?;
    tune_cells(&cfg.grid, jobs, force, |rho, alpha, mu| {
        let mut cell = cfg.clone();
        cell.synth.rho = rho;
        cell.solver.alpha = alpha;
        cell.solver.mu = mu;
        let mut total = 0.0;
        for fold in &folds {
            let run = train_zsl(fold, &cell)?;
            total += evaluate(&run.w, fold, cell.solver.normalize_inputs, Protocol::Pure, &[])?.per_class_top1;
        }
        Ok(total / folds.len() as f64)
    })
}

/// Files written by a ZSL training run.
pub struct ZslArtifacts;

impl ZslArtifacts {
    pub const MODEL: &'static str = "model.zslb";
    pub const TRACE: &'static str = "trace.jsonl";
    pub const CONFIG: &'static str = "config.json";
    pub const SYNTH_FEATURES: &'static str = "synth_features.zslb";
    pub const SYNTH_GUIDING: &'static str = "synth_guiding.zslb";
    pub const ENTROPY_TRACE: &'static str = "entropy_trace.json";

    pub fn iterate(t: usize) -> String {
        format!("iterate_{t:03}.zslb")
    }

    /// Writes the model, trace, iterates and synthesized set into `dir`.
    pub fn write(run: &ZslRun, cfg: &RunConfig, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(dir.join(Self::MODEL), &run.w)?;
        write_text(&dir.join(Self::TRACE), &run.trace.to_json_lines())?;
        write_text(&dir.join(Self::CONFIG), &cfg.to_json())?;
        for (t, w) in run.iterates.iter().enumerate() {
            write_matrix(dir.join(Self::iterate(t)), w)?;
        }
        if let Some(s) = &run.synth {
            write_matrix(dir.join(Self::SYNTH_FEATURES), &s.features)?;
            write_labels(dir.join(Self::SYNTH_GUIDING), &s.guiding_class)?;
        }
        if let Some(e) = &run.entropy {
            write_text(
                &dir.join(Self::ENTROPY_TRACE),
                &serde_json::to_string_pretty(e).expect("trace serializes"),
            )?;
        }
        Ok(())
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<FitTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FitTrace::from_json_lines(&text).map_err(|msg| Error::format(path, msg))
}

/// Largest `|recorded − recomputed| / max(1, |recomputed|)` over the records
/// of a ZSL run directory, recomputing each objective from the saved iterate.
pub fn verify_run(run_dir: &Path, bundle: &DatasetBundle) -> Result<f64> {
    let cfg = RunConfig::load(run_dir.join(ZslArtifacts::CONFIG))?;
    let trace = read_trace(&run_dir.join(ZslArtifacts::TRACE))?;
    if matches!(cfg.solver.mode, Mode::Fpl | Mode::Rpl) {
        return Err(Error::invalid(
            "objective recomputation covers the bidirectional modes only",
        ));
    }
    let data = prepared(bundle, &cfg.solver);
    let synth_path = run_dir.join(ZslArtifacts::SYNTH_FEATURES);
    let synth = if synth_path.exists() {
        let features = read_matrix(&synth_path)?;
        let guiding_class = read_labels(run_dir.join(ZslArtifacts::SYNTH_GUIDING))?;
        SynthSet {
            source_index: vec![0; features.cols()],
            features,
            guiding_class,
        }
    } else {
        SynthSet::empty(data.d())
    };
    let mut worst: f64 = 0.0;
    for (t, r) in trace.records.iter().enumerate() {
        let w = read_matrix(run_dir.join(ZslArtifacts::iterate(t)))?;
        let v = objective_value(&w, &data, &synth, &cfg.solver, r.alpha_t)?;
        worst = worst.max((r.objective - v).abs() / v.abs().max(1.0));
    }
    Ok(worst)
}

/// Resolves `path` relative to `base` unless it is absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
