use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use cbpl::data::format::{read_matrix, write_matrix};
use cbpl::data::{load_bundle, make_synthetic_fsl, make_synthetic_problem, save_bundle, LoadedBundle, SyntheticSpec};
use cbpl::metrics::Protocol;
use cbpl::pipeline::{
    evaluate, read_trace, train_fsl, train_zsl, tune, verify_run, write_text, RunConfig, ZslArtifacts,
};
use cbpl::solver::{FitTrace, Mode};
use cbpl::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cbpl",
    version,
    about = "Competitive bidirectional projection learning for zero- and few-shot classification"
)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (file for `eval`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic problem bundle.
    Gen(GenArgs),
    /// Train a zero-shot model.
    TrainZsl(TrainZslArgs),
    /// Train a few-shot model over averaged episodes.
    TrainFsl(TrainFslArgs),
    /// Evaluate a model on a bundle's test split.
    Eval(EvalArgs),
    /// Select (rho, alpha, mu) by class-wise cross-validation.
    Tune(TuneArgs),
    /// Summarize training traces.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    q: usize,
    /// Samples per class.
    #[arg(long)]
    n: usize,
    #[arg(long, allow_negative_numbers = true)]
    noise: f64,
    /// Held-out test samples per seen class (generalized split).
    #[arg(long, default_value_t = 0)]
    seen_test: usize,
    /// Support shots per novel class; produces a few-shot bundle.
    #[arg(long)]
    shots: Option<usize>,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    normalize: bool,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct TrainZslArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct TrainFslArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    k_shots: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Pure,
    Generalized,
    HitAtK,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, value_enum, default_value = "pure")]
    protocol: ProtocolArg,
    /// Extra hit@k cut-offs.
    #[arg(long = "hit-k")]
    hit_k: Vec<usize>,
    /// Evaluate on L2-normalized inputs (as the model was trained).
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Allow grids above the cell limit.
    #[arg(long)]
    force: bool,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace files (JSON lines).
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Write a convergence plot.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Recompute objectives from a training run directory.
    #[arg(long)]
    verify: Option<PathBuf>,
    /// Bundle the verified run was trained on.
    #[arg(long)]
    bundle: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.shared.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(&cli.shared, a),
        Command::TrainZsl(a) => cmd_train_zsl(&cli.shared, a),
        Command::TrainFsl(a) => cmd_train_fsl(&cli.shared, a),
        Command::Eval(a) => cmd_eval(&cli.shared, a),
        Command::Tune(a) => cmd_tune(&cli.shared, a),
        Command::Report(a) => cmd_report(a),
    }
}

fn require_out(shared: &Shared) -> Result<&Path> {
    shared
        .out
        .as_deref()
        .ok_or_else(|| Error::Validation("--out is required for this command".into()))
}

/// Defaults, then the config file, then flags.
fn resolve_config(shared: &Shared, flags: &SolverFlags) -> Result<RunConfig> {
    let mut cfg = match &shared.config {
        Some(path) => {
            info!("config file {}", path.display());
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = shared.seed {
        cfg.synth.seed = v;
    }
    if let Some(v) = flags.mode {
        cfg.solver.mode = v;
    }
    if let Some(v) = flags.alpha {
        cfg.solver.alpha = v;
    }
    if let Some(v) = flags.mu {
        cfg.solver.mu = v;
    }
    if let Some(v) = flags.beta {
        cfg.solver.beta = v;
    }
    if let Some(v) = flags.rho {
        cfg.synth.rho = v;
    }
    if let Some(v) = flags.max_iters {
        cfg.solver.max_iters = v;
    }
    if flags.normalize {
        cfg.solver.normalize_inputs = true;
    }
    cfg.validate()?;
    info!(
        "resolved config: {}",
        serde_json::to_string(&cfg).expect("config serializes")
    );
    Ok(cfg)
}

fn cmd_gen(shared: &Shared, a: &GenArgs) -> Result<()> {
    let out = require_out(shared)?;
    let spec = SyntheticSpec {
        seen_test_per_class: a.seen_test,
        ..SyntheticSpec::new(a.d, a.k, a.p, a.q, a.n, a.noise, shared.seed.unwrap_or(0))
    };
    spec.validate()?;
    let (bundle, w_true) = match a.shots {
        Some(shots) => {
            let (b, w) = make_synthetic_fsl(&spec, shots)?;
            (LoadedBundle::Fsl(b), w)
        }
        None => {
            let (b, w) = make_synthetic_problem(&spec)?;
            (LoadedBundle::Zsl(b), w)
        }
    };
    save_bundle(&bundle, out)?;
    write_matrix(out.join("ground_truth_W.zslb"), &w_true)?;
    println!("wrote bundle to {}", out.display());
    Ok(())
}

fn zsl_bundle(path: &Path) -> Result<cbpl::data::DatasetBundle> {
    match load_bundle(path)? {
        LoadedBundle::Zsl(b) => Ok(b),
        LoadedBundle::Fsl(f) => Ok(f.base),
    }
}

fn cmd_train_zsl(shared: &Shared, a: &TrainZslArgs) -> Result<()> {
    let out = require_out(shared)?;
    let cfg = resolve_config(shared, &a.solver)?;
    let bundle = zsl_bundle(&a.bundle)?;
    let run = train_zsl(&bundle, &cfg)?;
    ZslArtifacts::write(&run, &cfg, out)?;
    println!(
        "trained {} model ({} trace records) into {}",
        cfg.solver.mode.name(),
        run.trace.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train_fsl(shared: &Shared, a: &TrainFslArgs) -> Result<()> {
    let out = require_out(shared)?;
    let mut cfg = resolve_config(shared, &a.solver)?;
    if let Some(v) = a.episodes {
        cfg.episodes = v;
    }
    if let Some(v) = a.k_shots {
        cfg.shots = Some(v);
    }
    cfg.validate()?;
    let fsl = match load_bundle(&a.bundle)? {
        LoadedBundle::Fsl(f) => f,
        LoadedBundle::Zsl(_) => return Err(Error::Validation("train-fsl needs a few-shot bundle".into())),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(shared.jobs.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let fit = pool.install(|| train_fsl(&fsl, &cfg))?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    write_matrix(out.join(ZslArtifacts::MODEL), &fit.w)?;
    write_text(&out.join(ZslArtifacts::CONFIG), &cfg.to_json())?;
    for (h, trace) in fit.traces.iter().enumerate() {
        write_text(&out.join(format!("trace_episode_{h:03}.jsonl")), &trace.to_json_lines())?;
    }
    println!(
        "trained few-shot model over {} episodes into {}",
        fit.traces.len(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(shared: &Shared, a: &EvalArgs) -> Result<()> {
    let w = read_matrix(&a.model)?;
    let bundle = zsl_bundle(&a.bundle)?;
    let normalize = a.normalize
        || match &shared.config {
            Some(p) => RunConfig::load(p)?.solver.normalize_inputs,
            None => false,
        };
    let protocol = match a.protocol {
        ProtocolArg::Pure => Protocol::Pure,
        ProtocolArg::Generalized => Protocol::Generalized,
        ProtocolArg::HitAtK => Protocol::HitAtK,
    };
    let report = evaluate(&w, &bundle, normalize, protocol, &a.hit_k)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{text}");
    if let Some(out) = &shared.out {
        write_text(out, &format!("{text}\n"))?;
    }
    Ok(())
}

fn cmd_tune(shared: &Shared, a: &TuneArgs) -> Result<()> {
    let out = require_out(shared)?;
    let flags = SolverFlags {
        mode: a.mode,
        alpha: None,
        mu: None,
        beta: a.beta,
        rho: None,
        max_iters: a.max_iters,
        normalize: a.normalize,
    };
    let mut cfg = resolve_config(shared, &flags)?;
    if !a.rho.is_empty() {
        cfg.grid.rho_values = a.rho.clone();
    }
    if !a.alpha.is_empty() {
        cfg.grid.alpha_values = a.alpha.clone();
    }
    if !a.mu.is_empty() {
        cfg.grid.mu_values = a.mu.clone();
    }
    if let Some(f) = a.folds {
        cfg.grid.folds = f;
    }
    cfg.validate()?;
    let bundle = zsl_bundle(&a.bundle)?;
    let result = tune(&bundle, &cfg, shared.jobs, a.force)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    write_text(&out.join("tune.csv"), &result.to_csv()?)?;
    let best = serde_json::json!({
        "best": result.best.map(|(rho, alpha, mu)| serde_json::json!({"rho": rho, "alpha": alpha, "mu": mu})),
        "failed_cells": result.cells.iter().filter(|c| c.score.is_none()).count(),
        "cells": result.cells.len(),
    });
    let text = serde_json::to_string_pretty(&best).expect("json");
    write_text(&out.join("best.json"), &format!("{text}\n"))?;
    println!("{text}");
    match result.best {
        Some(_) => Ok(()),
        None => Err(Error::Validation("every grid cell failed".into())),
    }
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let mut traces = Vec::new();
    for path in &a.traces {
        traces.push((path, read_trace(path)?));
    }
    for (path, trace) in &traces {
        println!("{}", path.display());
        println!(
            "{:>5} {:>10} {:>16} {:>12} {:>8} {:>12}",
            "iter", "alpha_t", "objective", "dW_rel", "changes", "residual"
        );
        for r in &trace.records {
            let dw = r.rel_change.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
            println!(
                "{:>5} {:>10.6} {:>16.8e} {:>12} {:>8} {:>12.3e}",
                r.iteration, r.alpha_t, r.objective, dw, r.label_changes, r.residual
            );
        }
    }
    if let Some(svg) = &a.svg {
        let series: Vec<&FitTrace> = traces.iter().map(|(_, t)| t).collect();
        write_text(svg, &convergence_svg(&series))?;
        println!("wrote {}", svg.display());
    }
    if let Some(dir) = &a.verify {
        let bundle_path = a
            .bundle
            .as_ref()
            .ok_or_else(|| Error::Validation("--verify needs --bundle".into()))?;
        let bundle = zsl_bundle(bundle_path)?;
        let worst = verify_run(dir, &bundle)?;
        println!("max relative objective discrepancy: {worst:.3e}");
        if worst > 1e-9 {
            return Err(Error::Validation(format!(
                "objective recomputation differs by {worst:.3e}"
            )));
        }
    }
    Ok(())
}

/// Relative W-change per iteration on a log axis, one polyline per trace.
fn convergence_svg(traces: &[&FitTrace]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 300.0;
    const PAD: f64 = 40.0;
    let points: Vec<Vec<(f64, f64)>> = traces
        .iter()
        .map(|t| {
            t.records
                .iter()
                .filter_map(|r| {
                    r.rel_change
                        .filter(|v| *v > 0.0 && v.is_finite())
                        .map(|v| (r.iteration as f64, v.log10()))
                })
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !y_min.is_finite() {
        y_min = -1.0;
        y_max = 0.0;
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| PAD + (x / x_max) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y_min) / (y_max - y_min) * (H - 2.0 * PAD);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ty}\" font-size=\"12\" text-anchor=\"middle\">iteration</text>\n\
         <text x=\"12\" y=\"{cy}\" font-size=\"12\" transform=\"rotate(-90 12 {cy})\" text-anchor=\"middle\">log10 relative change of W</text>\n",
        b = H - PAD,
        r = W - PAD,
        cx = W / 2.0,
        ty = H - 8.0,
        cy = H / 2.0,
    );
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    for (i, pts) in points.iter().enumerate() {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
            colours[i % colours.len()],
            path.join(" ")
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
