use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use snl_cli::commands::{self, SolveReport, WarmStart};
use snl_cli::config::{ExperimentConfig, OUTPUT_DIR_ENV};
use snl_cli::experiments::{reach_analysis, run_centrality_trace, run_comparison, run_early_termination_study};
use snl_cli::output::{write_text, write_trace};
use snl_cli::ExperimentError;
use snl_core::design::{validate_params, DEFAULT_SK_MAX_ITER, DEFAULT_SK_TOL};
use snl_core::instance::{build_adjacency, generate_instance};
use snl_core::solver::EarlyStopOptions;
use snl_core::{EstimateSource, GeneratorConfig, Method, Mode, SolverOptions};

#[derive(Parser)]
#[command(name = "snl", version, about = "Decentralized sensor network localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random connected instance.
    Generate(GenerateArgs),
    /// Build and check the 2-Block matrix parameters for a graph.
    Design(DesignArgs),
    /// Run one solver on one instance.
    Solve(SolveArgs),
    /// Run a seeded batch experiment.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = OUTPUT_DIR_ENV)]
        output_dir: Option<PathBuf>,
    },
    /// Check input files.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Comparison,
    EarlyStop,
    Centrality,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0.7)]
    radius: f64,
    #[arg(long, default_value_t = 7)]
    max_degree: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_factor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, conflicts_with = "edges")]
    instance: Option<PathBuf>,
    /// Edge list, one `i j` pair per line.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Node count for an edge list with isolated trailing nodes.
    #[arg(long)]
    n: Option<usize>,
    /// Balance by message passing between neighbors.
    #[arg(long)]
    decentralized: bool,
    #[arg(long, default_value_t = DEFAULT_SK_MAX_ITER)]
    rounds: usize,
    #[arg(long, default_value_t = DEFAULT_SK_TOL)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Design file from `snl design`; built on the fly when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "splitting")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "serial")]
    mode: ModeArg,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Stop once the relative fixed-point residual is this small (0 disables).
    #[arg(long)]
    fixed_point_tol: Option<f64>,
    /// A JSON file of locations, or `perturb:SD` for noisy ground truth.
    #[arg(long)]
    warm_start: Option<String>,
    /// Halt after this many iterations without a new objective minimum.
    #[arg(long, num_args = 0..=1, default_missing_value = "100")]
    early_stop: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    estimate_source: Option<SourceArg>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Splitting,
    Admm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Serial,
    Decentralized,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Psd,
    Deviation,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = commands::CHECK_TOL)]
    tol: f64,
}

fn emit(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = GeneratorConfig {
        n: a.n,
        m: a.m,
        d: a.d,
        radius: a.radius,
        max_degree: a.max_degree,
        noise_factor: a.noise_factor,
    };
    let inst = generate_instance(&cfg, a.seed)?;
    let value: serde_json::Value = serde_json::from_str(&inst.to_json())?;
    emit(a.out.as_deref(), &value)
}

fn design(a: DesignArgs) -> Result<()> {
    let adj = commands::load_adjacency(a.instance.as_deref(), a.edges.as_deref(), a.n)?;
    let d = commands::design(&adj, a.decentralized, a.rounds, a.tol)?;
    if let Some(r) = d.rounds {
        log::info!("balanced in {r} message rounds");
    }
    if !d.file.checks.passed {
        log::warn!("design fails checks: {:?}", d.file.checks.failures());
    }
    emit(a.out.as_deref(), &serde_json::to_value(&d.file)?)
}

fn solve(a: SolveArgs) -> Result<()> {
    let instance = commands::load_instance(&a.instance)?;
    let method = match a.method {
        MethodArg::Splitting => Method::Splitting,
        MethodArg::Admm => Method::Admm,
    };
    let mut opts = SolverOptions::for_method(method);
    opts.mode = match a.mode {
        ModeArg::Serial => Mode::Serial,
        ModeArg::Decentralized => Mode::Decentralized,
    };
    if let Some(g) = a.gamma {
        opts.gamma = g;
    }
    if let Some(al) = a.alpha {
        opts.alpha = al;
    }
    if let Some(m) = a.max_iter {
        opts.max_iter = m;
    }
    if let Some(t) = a.fixed_point_tol {
        opts.fixed_point_tol = (t > 0.0).then_some(t);
    }
    opts.early_stop = a.early_stop.map(|patience| EarlyStopOptions { patience, halt: true });
    opts.seed = a.seed;
    if let Some(s) = a.estimate_source {
        opts.estimate_source = match s {
            SourceArg::Psd => EstimateSource::Psd,
            SourceArg::Deviation => EstimateSource::Deviation,
        };
    }
    let warm: Option<WarmStart> = a.warm_start.as_deref().map(str::parse).transpose()?;
    let params = match (method, &a.params) {
        (Method::Admm, _) => None,
        (Method::Splitting, Some(p)) => Some(commands::load_params(p)?),
        (Method::Splitting, None) => {
            Some(commands::design(&build_adjacency(&instance), false, 0, DEFAULT_SK_TOL)?.params)
        }
    };
    let trace = commands::solve(&instance, params.as_ref(), method, &opts, warm.as_ref())?;
    if let Some(p) = &a.trace {
        write_trace(p, &trace)?;
    }
    let report = SolveReport::new(&trace, &instance);
    emit(a.out.as_deref(), &serde_json::to_value(&report)?)
}

fn experiment(kind: ExperimentKind, config: Option<PathBuf>, output_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = match &config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if output_dir.is_some() {
        cfg.output_dir = output_dir;
    }
    let summary = match kind {
        ExperimentKind::Comparison => {
            let r = run_comparison(&cfg)?;
            let medians: serde_json::Map<String, serde_json::Value> = r
                .summaries
                .iter()
                .map(|s| (s.label(), json!(s.median.last())))
                .collect();
            let reach = if cfg.warm_start.is_some() && cfg.methods.contains(&Method::Splitting) {
                let ra = reach_analysis(&r, cfg.plateau_window, cfg.reach_band)?;
                ra.medians
                    .iter()
                    .map(|(m, s, v)| (format!("{m}/{s}"), json!(v)))
                    .collect::<serde_json::Map<_, _>>()
                    .into()
            } else {
                serde_json::Value::Null
            };
            json!({
                "experiment": "comparison",
                "trials": r.trials.len(),
                "failed_trials": r.failures.len(),
                "final_median_rel_error": medians,
                "median_reach_iteration": reach,
            })
        }
        ExperimentKind::EarlyStop => {
            let s = run_early_termination_study(&cfg)?;
            json!({
                "experiment": "early-stop",
                "trials": s.trials.len(),
                "failed_trials": s.failures.len(),
                "wins": s.wins,
                "win_fraction": s.win_fraction,
                "win_fraction_95": [s.interval.0, s.interval.1],
                "median_mean_distance_early": s.median_distance_early,
                "median_mean_distance_converged": s.median_distance_converged,
                "median_centrality_early": s.median_centrality_early,
                "median_centrality_converged": s.median_centrality_converged,
            })
        }
        ExperimentKind::Centrality => {
            let c = run_centrality_trace(&cfg)?;
            json!({
                "experiment": "centrality",
                "trials": c.trials,
                "failed_trials": c.failures.len(),
                "truth_centrality": c.truth,
                "peak_centrality": c.mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                "final_centrality": c.mean.last(),
                "peaks_before_end": c.peaks_before_end(),
            })
        }
    };
    emit(None, &summary)
}

fn validate(a: ValidateArgs) -> Result<()> {
    let mut out = serde_json::Map::new();
    let mut ok = true;
    if let Some(p) = &a.config {
        ExperimentConfig::load(p)?;
        out.insert("config".into(), json!("ok"));
    }
    if a.instance.is_some() || a.edges.is_some() {
        if let Some(p) = &a.instance {
            commands::load_instance(p)?;
            out.insert("instance".into(), json!("ok"));
        }
        if let Some(pp) = &a.params {
            let adj = commands::load_adjacency(a.instance.as_deref(), a.edges.as_deref(), None)?;
            let report = validate_params(&commands::load_params(pp)?, &adj, a.tol);
            ok &= report.passed;
            out.insert("params".into(), serde_json::to_value(&report)?);
        }
    } else if a.params.is_some() {
        bail!(ExperimentError::Config("--params needs --instance or --edges".into()));
    }
    if out.is_empty() {
        bail!(ExperimentError::Config("nothing to validate".into()));
    }
    emit(None, &serde_json::Value::Object(out))?;
    if !ok {
        bail!(ExperimentError::Config("matrix parameters fail validation".into()));
    }
    Ok(())
}

fn error_json(e: &anyhow::Error) -> serde_json::Value {
    let kind = if let Some(x) = e.downcast_ref::<ExperimentError>() {
        x.kind()
    } else if e.downcast_ref::<clap::Error>().is_some() {
        "usage"
    } else if e.downcast_ref::<snl_core::InstanceError>().is_some() {
        "instance"
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "internal"
    };
    let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
    json!({"error": {"kind": kind, "message": chain.join(": ")}})
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json(&anyhow::Error::new(e)));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Design(a) => design(a),
        Command::Solve(a) => solve(a).context("solve"),
        Command::Experiment { kind, config, output_dir } => experiment(kind, config, output_dir),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
