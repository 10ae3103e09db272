use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use pairwise_em::diagnostics::{
    covariance_report, optimal_rate, separation_profile, sign_resolved_errors, ReportOptions,
};
use pairwise_em::estimators::{run, spectral_init, EstimatorKind, IterationConfig};
use pairwise_em::experiments::{
    identifiability_demo, metadata_path, run_sweep, summarize, write_metadata, write_rows,
    OutputFormat, SweepConfig, SweepEstimator, SweepKind, SweepMetadata,
};
use pairwise_em::model::{generate, random_init, DesignKind, GroundTruthSpec, Instance};
use pairwise_em::rng::{derive_seed, rng_from_seed, Purpose};
use rand::Rng;

#[derive(Parser, Debug)]
#[command(
    name = "pairwise-em",
    version,
    about = "EM, Easy-EM, alternating minimization and spectral initialization for symmetric mixtures of pairwise-comparison regressions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic instance and write it as JSON.
    Gen(GenArgs),
    /// Run an estimator on an instance and write its iteration trace as JSON.
    Fit(FitArgs),
    /// Print covariance health checks, a separation profile and the optimal rate.
    Diagnose(DiagnoseArgs),
    /// Sweep the random-initialization interpolation weight eta.
    SweepInit(SweepArgs),
    /// Sweep the noise variance sigma^2 with spectral initialization.
    SweepNoise(SweepArgs),
    /// Sweep the sample size N with spectral initialization.
    SweepN(SweepArgs),
    /// Show two three-component mixtures with identical pairwise distance multisets.
    Identifiability(IdentArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DesignArg {
    Pairwise,
    Gaussian,
    Exhaustive,
}

impl From<DesignArg> for DesignKind {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Pairwise => DesignKind::PairwiseUniform,
            DesignArg::Gaussian => DesignKind::GaussianIsotropic,
            DesignArg::Exhaustive => DesignKind::ExhaustivePairs,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Em,
    EasyEm,
    Am,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Em => EstimatorKind::Em,
            EstimatorArg::EasyEm => EstimatorKind::EasyEm,
            EstimatorArg::Am => EstimatorKind::Am,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Debug)]
enum InitSpec {
    Spectral,
    Random(f64),
    File(PathBuf),
}

impl FromStr for InitSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "spectral" {
            return Ok(InitSpec::Spectral);
        }
        if let Some(eta) = s.strip_prefix("random:") {
            let eta: f64 = eta.parse().map_err(|_| format!("invalid eta `{eta}`"))?;
            if !(0.0..=1.0).contains(&eta) {
                return Err(format!("eta must lie in [0, 1], got {eta}"));
            }
            return Ok(InitSpec::Random(eta));
        }
        if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err("file: needs a path".into());
            }
            return Ok(InitSpec::File(PathBuf::from(path)));
        }
        Err(format!(
            "expected `spectral`, `random:ETA` or `file:PATH`, got `{s}`"
        ))
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Number of items
    #[arg(long, default_value_t = 50)]
    d: usize,
    /// Number of observations (ignored for the exhaustive design)
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Noise standard deviation
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Covariate design
    #[arg(long, value_enum, default_value_t = DesignArg::Pairwise)]
    design: DesignArg,
    /// Seed for the data stream
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output instance JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Instance JSON written by `gen`
    #[arg(long)]
    instance: PathBuf,
    /// Iteration to run
    #[arg(long, value_enum, default_value_t = EstimatorArg::Em)]
    estimator: EstimatorArg,
    /// Starting point: spectral, random:ETA or file:PATH (JSON array, or an instance whose ground truth is used)
    #[arg(long, default_value = "spectral")]
    init: InitSpec,
    /// Maximum number of iterations
    #[arg(long, default_value_t = 100)]
    max_steps: usize,
    /// Stop when the sup-norm step change falls to this value
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Seed for random initialization and the randomized norm bound
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record every k-th iterate in the trace (the final iterate is always kept)
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Output trace JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Instance JSON written by `gen`
    #[arg(long)]
    instance: PathBuf,
    /// Separation threshold for the separation profile
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Constant in the error-floor formula
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    /// Seed for the randomized sup-norm lower bound
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// JSON sweep configuration; inline flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    /// Output format
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Base seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of items [default: 50]
    #[arg(long)]
    d: Option<usize>,
    /// Sample size, for sweeps that hold N fixed [default: 1000]
    #[arg(long)]
    n: Option<usize>,
    /// Noise standard deviation, for sweeps that hold sigma fixed [default: 0.1]
    #[arg(long)]
    sigma: Option<f64>,
    /// Repetitions per grid point [default: 100]
    #[arg(long)]
    reps: Option<usize>,
    /// Maximum iterations per run [default: 100 for sweep-init, 20 otherwise]
    #[arg(long)]
    max_steps: Option<usize>,
    /// Step-change stopping tolerance [default: 1e-10]
    #[arg(long)]
    tol: Option<f64>,
    /// Covariate design [default: pairwise]
    #[arg(long, value_enum)]
    design: Option<DesignArg>,
    /// Comma-separated eta grid for sweep-init [default: 0.1,0.2,...,1]
    #[arg(long, value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,
    /// Comma-separated sigma^2 grid for sweep-noise [default: 10 log-spaced points in 0.002..2]
    #[arg(long, value_delimiter = ',')]
    sigma_sq_grid: Option<Vec<f64>>,
    /// Comma-separated N grid for sweep-n [default: 8 log-spaced points in 500..2000]
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Comma-separated estimators: spectral, em_from_spectral, easy_em_from_spectral, em_from_random_init [default: em_from_random_init for sweep-init, the three spectral ones otherwise]
    #[arg(long, value_delimiter = ',', value_parser = parse_sweep_estimator)]
    estimators: Option<Vec<SweepEstimator>>,
    /// Success threshold as a multiple of the optimal rate [default: 10]
    #[arg(long)]
    success_factor: Option<f64>,
    /// Worker threads [default: number of cores]
    #[arg(long, env = "PAIRWISE_EM_JOBS")]
    jobs: Option<usize>,
}

fn parse_sweep_estimator(s: &str) -> std::result::Result<SweepEstimator, String> {
    SweepEstimator::from_label(s).ok_or_else(|| format!("unknown estimator `{s}`"))
}

#[derive(Args, Debug)]
struct IdentArgs {
    /// Dimension; the demo uses the first two coordinates and a shared random tail
    #[arg(long, default_value_t = 5)]
    d: usize,
    /// Seed for the tail coordinates
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::SweepInit(a) => cmd_sweep(SweepKind::InitInterpolation, a),
        Command::SweepNoise(a) => cmd_sweep(SweepKind::NoiseSweep, a),
        Command::SweepN(a) => cmd_sweep(SweepKind::SampleSizeSweep, a),
        Command::Identifiability(a) => cmd_identifiability(a),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let inst = generate(
        a.d,
        a.n,
        a.sigma,
        &GroundTruthSpec::Linear(a.d),
        a.design.into(),
        a.seed,
    )?;
    inst.save_json(&a.out)?;
    println!(
        "wrote instance d={} N={} sigma={} to {}",
        inst.d,
        inst.n,
        inst.sigma,
        a.out.display()
    );
    Ok(())
}

fn estimator_label(e: EstimatorArg) -> &'static str {
    match e {
        EstimatorArg::Em => "em",
        EstimatorArg::EasyEm => "easy-em",
        EstimatorArg::Am => "am",
    }
}

fn load_init_vector(path: &Path, d: usize) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Vec<f64> = match serde_json::from_str::<Vec<f64>>(&text) {
        Ok(v) => v,
        Err(_) => Instance::load_json(path)?.theta_star.as_slice().to_vec(),
    };
    if v.len() != d {
        bail!(
            "initial vector in {} has length {}, instance has d = {d}",
            path.display(),
            v.len()
        );
    }
    Ok(v)
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    if a.thin == 0 {
        bail!("--thin must be at least 1");
    }
    let inst = Instance::load_json(&a.instance)?;
    let theta0: Vec<f64> = match &a.init {
        InitSpec::Spectral => spectral_init(&inst)?.theta_tilde.as_slice().to_vec(),
        InitSpec::Random(eta) => {
            let mut rng = rng_from_seed(derive_seed(a.seed, 0, 0, Purpose::Init));
            random_init(&inst.theta_star, *eta, &mut rng)?
                .as_slice()
                .to_vec()
        }
        InitSpec::File(p) => load_init_vector(p, inst.d)?,
    };
    let cfg = IterationConfig {
        max_steps: a.max_steps,
        step_tol: a.tol,
        ..IterationConfig::default()
    };
    let trace = run(
        &inst,
        &DVector::from_vec(theta0.clone()),
        a.estimator.into(),
        &cfg,
    )?;
    let init_err = sign_resolved_errors(&theta0, &inst.theta_star)?;
    let err = sign_resolved_errors(&trace.final_theta, &inst.theta_star)?;
    println!(
        "estimator={} steps={} converged={}",
        estimator_label(a.estimator),
        trace.steps_taken,
        trace.converged
    );
    println!(
        "init_error: l2_squared={:.6e} linf={:.6e}",
        init_err.l2_squared, init_err.linf
    );
    println!(
        "final_error: l2_squared={:.6e} linf={:.6e} sign={}",
        err.l2_squared, err.linf, err.sign_used
    );
    if inst.is_pairwise() {
        let opts = ReportOptions {
            theta0_linf_err: Some(init_err.linf),
            seed: a.seed,
            ..ReportOptions::default()
        };
        print_theory(&inst, &opts)?;
    } else {
        println!("optimal_rate={:.6e}", optimal_rate(&inst)?);
    }
    if let Some(out) = &a.out {
        trace.thinned(a.thin).save_json(out)?;
        println!("wrote trace to {}", out.display());
    }
    Ok(())
}

fn print_theory(inst: &Instance, opts: &ReportOptions) -> Result<()> {
    let r = covariance_report(inst, opts)?;
    println!("optimal_rate={:.6e}", r.optimal_rate);
    println!(
        "tau={:.6e} (c2={}) t_steps={}",
        r.tau,
        r.c2,
        r.t_steps.map_or("n/a".to_string(), |t| t.to_string())
    );
    println!(
        "covariance: rank={} trace_dagger={:.6e} op_norm={:.6e} dagger_op_norm={:.6e} dagger_linf in [{:.6e}, {:.6e}]",
        r.rank,
        r.trace_dagger,
        r.spectral_norm_cov,
        r.spectral_norm_dagger,
        r.linf_dagger_lower,
        r.linf_dagger_upper
    );
    println!(
        "flags: op_norm_le_3={} dagger_op_norm_le_5={} trace_dagger_ge_third={} rank_full={}",
        r.flags.op_norm_le_3,
        r.flags.dagger_op_norm_le_5,
        r.flags.trace_dagger_ge_third,
        r.flags.rank_full
    );
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<()> {
    let inst = Instance::load_json(&a.instance)?;
    println!(
        "instance: d={} N={} sigma={} design={:?}",
        inst.d, inst.n, inst.sigma, inst.design
    );
    if inst.is_pairwise() {
        let opts = ReportOptions {
            c2: a.c2,
            seed: a.seed,
            ..ReportOptions::default()
        };
        print_theory(&inst, &opts)?;
    } else {
        println!("optimal_rate={:.6e}", optimal_rate(&inst)?);
    }
    let prof = separation_profile(&inst.theta_star, a.delta)?;
    let max = prof.sizes.iter().copied().max().unwrap_or(0);
    let mean = prof.sizes.iter().sum::<usize>() as f64 / prof.sizes.len() as f64;
    println!(
        "separation_profile(delta={}): max={} mean={:.3} sizes={:?}",
        prof.delta, max, mean, prof.sizes
    );
    Ok(())
}

fn build_sweep_config(kind: SweepKind, a: &SweepArgs) -> Result<SweepConfig> {
    let mut value = serde_json::to_value(SweepConfig::defaults_for(kind))?;
    if let Some(path) = &a.config {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let serde_json::Value::Object(fields) = file else {
            bail!(
                "{}: sweep configuration must be a JSON object",
                path.display()
            );
        };
        let expected = serde_json::to_value(kind)?;
        if let Some(k) = fields.get("kind") {
            if *k != expected {
                bail!(
                    "{}: config kind {k} does not match this subcommand ({expected})",
                    path.display()
                );
            }
        }
        let obj = value.as_object_mut().ok_or_else(|| anyhow!("internal"))?;
        obj.extend(fields);
    }
    let mut cfg: SweepConfig =
        serde_json::from_value(value).context("invalid sweep configuration")?;
    if let Some(v) = a.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = a.d {
        cfg.d = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = a.reps {
        cfg.reps = v;
    }
    if let Some(v) = a.max_steps {
        cfg.max_steps = v;
    }
    if let Some(v) = a.tol {
        cfg.step_tol = v;
    }
    if let Some(v) = a.design {
        cfg.design = v.into();
    }
    if let Some(v) = &a.eta_grid {
        cfg.eta_grid = v.clone();
    }
    if let Some(v) = &a.sigma_sq_grid {
        cfg.sigma_sq_grid = v.clone();
    }
    if let Some(v) = &a.n_grid {
        cfg.n_grid = v.clone();
    }
    if let Some(v) = &a.estimators {
        cfg.estimators = v.clone();
    }
    if let Some(v) = a.success_factor {
        cfg.success_factor = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sweep(kind: SweepKind, a: SweepArgs) -> Result<()> {
    let cfg = build_sweep_config(kind, &a)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs.filter(|&j| j > 0) {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().context("building thread pool")?;
    let rows = pool.install(|| run_sweep(&cfg))?;
    let format: OutputFormat = a.format.into();
    write_rows(&rows, &a.out, format)?;
    write_metadata(&SweepMetadata::new(&cfg, rows.len()), &a.out)?;
    println!(
        "wrote {} rows to {} (metadata {})",
        rows.len(),
        a.out.display(),
        metadata_path(&a.out).display()
    );
    println!(
        "{:>12}  {:<22} {:>13} {:>13} {:>13} {:>8}",
        "grid", "estimator", "mean_err", "median_err", "median_rate", "success"
    );
    for s in summarize(&rows) {
        println!(
            "{:>12.5e}  {:<22} {:>13.5e} {:>13.5e} {:>13.5e} {:>8.2}",
            s.grid_value,
            s.estimator.label(),
            s.mean_final_l2sq,
            s.median_final_l2sq,
            s.median_optimal_rate,
            s.success_fraction
        );
    }
    Ok(())
}

fn cmd_identifiability(a: IdentArgs) -> Result<()> {
    if a.d < 2 {
        bail!("--d must be at least 2");
    }
    let mut rng = rng_from_seed(derive_seed(a.seed, 0, 0, Purpose::Diagnostics));
    let tail: Vec<f64> = (0..a.d - 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let demo = identifiability_demo(&tail);
    println!("mixture A: {:?}", demo.mixture_a);
    println!("mixture B: {:?}", demo.mixture_b);
    for p in &demo.pairs {
        println!("pair ({}, {}): A {:?}  B {:?}", p.i, p.j, p.a, p.b);
    }
    println!(
        "verdict: {}",
        if demo.equal { "EQUAL" } else { "DIFFERENT" }
    );
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&demo)?)
            .with_context(|| format!("writing {}", out.display()))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
