//! Command-line front end: estimation on CSV inputs, data set simulation,
//! the state-evolution oracle, and benchmark sweeps.
//!
//! Outputs are a pure function of inputs, flags and seed: reports omit
//! timestamps unless `--timing` is passed, so repeated runs (and runs with
//! different `--threads`) are byte-identical.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hede::covariance::{estimate_block_covariance, whiten, BlockCovariance, BlockSpec};
use hede::ensemble::{run_hede_detailed, GridConfig};
use hede::rng::replicate_seed;
use hede::simulation::{ArBlockConfig, SignalKind, SimConfig};
use hede::state_evolution::{solve_joint_fixed_point, solve_ridge_scalar, SignalPrior};
use hede::{DataSet, HedeError};

const SCHEMA: &str = "hede/1";

#[derive(Parser)]
#[command(name = "hede", version, about = "Heritability estimation via debiased ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate heritability from CSV inputs.
    Estimate(EstimateArgs),
    /// Simulate a data set and write X.csv, y.csv and truth.json.
    Simulate(SimulateArgs),
    /// Solve the fixed-point oracle for given parameters.
    Oracle(OracleArgs),
    /// Run a simulation sweep and emit a long-format CSV of estimates.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Design matrix: headerless CSV, rows = samples, columns = features.
    #[arg(long)]
    x: PathBuf,
    /// Response vector: one value per line.
    #[arg(long)]
    y: PathBuf,
    /// Block file for covariance whitening ("identity" skips whitening
    /// explicitly; omit the flag to skip it implicitly).
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    t_min: f64,
    #[arg(long, default_value_t = 0.5)]
    t_max: f64,
    #[arg(long, default_value_t = 0.1)]
    log_step: f64,
    /// Worker threads (fallback: HEDE_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock milliseconds in the report (breaks byte-for-byte
    /// reproducibility across runs).
    #[arg(long, default_value_t = false)]
    timing: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat key=value config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    h2: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    maf_low: Option<f64>,
    #[arg(long)]
    maf_high: Option<f64>,
    #[arg(long)]
    noise_sigma2: Option<f64>,
    /// Signal family: zin | stratified.
    #[arg(long)]
    signal: Option<String>,
    #[arg(long)]
    strata: Option<usize>,
    #[arg(long)]
    ar_rho: Option<f64>,
    #[arg(long)]
    ar_block_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for X.csv, y.csv, truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long, allow_negative_numbers = true)]
    sigma2: f64,
    /// Signal prior: "null", "point:B", or "zin:KAPPA:VARIANCE" (on the
    /// sqrt(n)-scaled coordinates).
    #[arg(long, default_value = "null")]
    prior: String,
    #[arg(long, allow_negative_numbers = true)]
    lambda_l: f64,
    #[arg(long, allow_negative_numbers = true)]
    lambda_r: f64,
    #[arg(long, default_value_t = 61)]
    quad_nodes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Sweep config: key=value lines; n, p, h2, kappa accept comma-separated
    /// lists and are crossed into scenarios.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct GridReport {
    lasso_retained: usize,
    lasso_dropped: usize,
    ridge_retained: usize,
    ridge_dropped: usize,
    lasso_df_over_n: [f64; 2],
    ridge_df_over_n: [f64; 2],
    df_l_selected: f64,
    df_r_selected: f64,
}

#[derive(Serialize)]
struct EstimateReport {
    schema: &'static str,
    h2: f64,
    alpha_l: f64,
    lambda_l: f64,
    lambda_r: f64,
    tau_c2_min: f64,
    raw_numerator: f64,
    sample_var_y: f64,
    n: usize,
    p: usize,
    delta: f64,
    grid: GridReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_clock_ms: Option<u128>,
}

#[derive(Serialize)]
struct TruthReport<'a> {
    schema: &'static str,
    n: usize,
    p: usize,
    seed: u64,
    sigma2: f64,
    h2_true: f64,
    h2_realized: f64,
    beta: &'a [f64],
}

#[derive(Serialize)]
struct OracleReport {
    schema: &'static str,
    tau_l: f64,
    tau_r: f64,
    rho: f64,
    zeta_l: f64,
    zeta_r: f64,
    df_l: f64,
    df_r: f64,
    scalar_alpha_star: f64,
    scalar_tau_star: f64,
}

fn main() {
    // usage errors are malformed input (exit 1); keep help/version at 0
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    };
    std::process::exit(code);
}

/// 1 = malformed input, 2 = empty grid, 3 = numerical failure.
fn exit_code(err: &HedeError) -> i32 {
    match err {
        HedeError::EmptyGrid { .. } => 2,
        HedeError::NotConverged { .. }
        | HedeError::NoBracket { .. }
        | HedeError::DegenerateDf { .. }
        | HedeError::SingularBlock(_)
        | HedeError::NoNonzeros => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), HedeError> {
    match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    }
}

fn init_threads(requested: Option<usize>) {
    let threads = requested.or_else(|| {
        std::env::var("HEDE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), HedeError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| HedeError::Io {
            path: path.display().to_string(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), HedeError> {
    init_threads(args.threads);
    let started = Instant::now();

    let x = hede::io::read_matrix_csv(&args.x)?;
    let y = hede::io::read_vector(&args.y)?;
    let mut data = DataSet::new(y, x)?;

    if let Some(blocks) = &args.blocks {
        let cov = if blocks == "identity" {
            BlockCovariance::identity(data.p())?
        } else {
            let text = std::fs::read_to_string(blocks).map_err(|e| HedeError::Io {
                path: blocks.clone(),
                source: e,
            })?;
            let spec = BlockSpec::parse(&text, data.p())?;
            if spec.max_block_size() >= data.n() {
                eprintln!(
                    "warning: largest block ({}) is not smaller than the sample count ({}); \
                     blockwise covariance estimates will be poor",
                    spec.max_block_size(),
                    data.n()
                );
            }
            estimate_block_covariance(&data, &spec)?
        };
        data = whiten(&data, &cov)?;
    }

    let cfg = GridConfig {
        t_min: args.t_min,
        t_max: args.t_max,
        log_step: args.log_step,
        lambda_seed_range: None,
    };
    let (est, diag) = run_hede_detailed(&data, &cfg)?;
    let elapsed = started.elapsed().as_millis();
    eprintln!("estimate finished in {elapsed} ms");

    let report = EstimateReport {
        schema: SCHEMA,
        h2: est.h2,
        alpha_l: est.choice.alpha_l,
        lambda_l: est.choice.lambda_l,
        lambda_r: est.choice.lambda_r,
        tau_c2_min: est.choice.tau_c2_min,
        raw_numerator: est.raw_numerator,
        sample_var_y: est.sample_var_y,
        n: data.n(),
        p: data.p(),
        delta: data.delta(),
        grid: GridReport {
            lasso_retained: diag.lasso_retained,
            lasso_dropped: diag.lasso_dropped,
            ridge_retained: diag.ridge_retained,
            ridge_dropped: diag.ridge_dropped,
            lasso_df_over_n: [diag.lasso_df_over_n.0, diag.lasso_df_over_n.1],
            ridge_df_over_n: [diag.ridge_df_over_n.0, diag.ridge_df_over_n.1],
            df_l_selected: diag.df_l_selected,
            df_r_selected: diag.df_r_selected,
        },
        wall_clock_ms: args.timing.then_some(elapsed),
    };
    write_output(args.out.as_deref(), &to_json(&report))
}

fn build_sim_config(args: &SimulateArgs) -> Result<SimConfig, HedeError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HedeError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            SimConfig::from_key_values(&text)?
        }
        None => {
            let n = args.n.ok_or_else(|| {
                HedeError::BadParameter("--n is required without --config".into())
            })?;
            let p = args.p.ok_or_else(|| {
                HedeError::BadParameter("--p is required without --config".into())
            })?;
            SimConfig::new(n, p, 0.5, 0.1, 0)
        }
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(h2) = args.h2 {
        cfg.h2 = h2;
    }
    if let Some(kappa) = args.kappa {
        cfg.kappa = kappa;
    }
    if let Some(lo) = args.maf_low {
        cfg.maf_range.0 = lo;
    }
    if let Some(hi) = args.maf_high {
        cfg.maf_range.1 = hi;
    }
    if let Some(s2) = args.noise_sigma2 {
        cfg.noise_sigma2 = s2;
    }
    if let Some(kind) = &args.signal {
        cfg.signal_kind = match kind.as_str() {
            "zin" | "zero_inflated_normal" => SignalKind::ZeroInflatedNormal,
            "stratified" | "stratified_mixture" => SignalKind::StratifiedMixture,
            other => {
                return Err(HedeError::BadParameter(format!(
                    "unknown signal kind '{other}'"
                )))
            }
        };
    }
    if let Some(k) = args.strata {
        let mut strat = cfg.strat.unwrap_or_default();
        strat.num_strata = k;
        cfg.strat = Some(strat);
    }
    if args.ar_rho.is_some() || args.ar_block_size.is_some() {
        let rho = args.ar_rho.ok_or_else(|| {
            HedeError::BadParameter("--ar-rho and --ar-block-size go together".into())
        })?;
        let block_size = args.ar_block_size.ok_or_else(|| {
            HedeError::BadParameter("--ar-rho and --ar-block-size go together".into())
        })?;
        cfg.ar_blocks = Some(ArBlockConfig { rho, block_size });
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), HedeError> {
    let cfg = build_sim_config(&args)?;
    std::fs::create_dir_all(&args.out).map_err(|e| HedeError::Io {
        path: args.out.display().to_string(),
        source: e,
    })?;
    let (data, truth) = hede::simulate_dataset(&cfg, None)?;
    hede::io::write_matrix_csv(&args.out.join("X.csv"), data.x())?;
    hede::io::write_vector(&args.out.join("y.csv"), data.y())?;
    let report = TruthReport {
        schema: SCHEMA,
        n: cfg.n,
        p: cfg.p,
        seed: cfg.seed,
        sigma2: truth.sigma2,
        h2_true: truth.h2_true,
        h2_realized: truth.h2_realized.unwrap_or(f64::NAN),
        beta: &truth.beta,
    };
    let path = args.out.join("truth.json");
    std::fs::write(&path, to_json(&report)).map_err(|e| HedeError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn parse_prior(spec: &str) -> Result<SignalPrior, HedeError> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["null"] => Ok(SignalPrior::null()),
        ["point", b] => {
            let b: f64 = b.parse().map_err(|_| {
                HedeError::BadParameter(format!("bad point prior value '{b}'"))
            })?;
            Ok(SignalPrior::PointMasses(vec![(b, 0.5), (-b, 0.5)]))
        }
        ["zin", kappa, variance] => {
            let kappa: f64 = kappa.parse().map_err(|_| {
                HedeError::BadParameter(format!("bad zin kappa '{kappa}'"))
            })?;
            let variance: f64 = variance.parse().map_err(|_| {
                HedeError::BadParameter(format!("bad zin variance '{variance}'"))
            })?;
            Ok(SignalPrior::ZeroInflatedNormal { kappa, variance })
        }
        _ => Err(HedeError::BadParameter(format!(
            "prior '{spec}' is not null, point:B or zin:KAPPA:VARIANCE"
        ))),
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<(), HedeError> {
    let prior = parse_prior(&args.prior)?;
    let sol = solve_joint_fixed_point(
        args.delta,
        args.sigma2,
        &prior,
        args.lambda_l,
        args.lambda_r,
        args.quad_nodes,
    )?;
    let sigma_beta2 = args.delta * prior.second_moment();
    let (alpha_star, tau_star) =
        solve_ridge_scalar(args.delta, args.sigma2, sigma_beta2, args.lambda_r)?;
    let report = OracleReport {
        schema: SCHEMA,
        tau_l: sol.tau_l,
        tau_r: sol.tau_r,
        rho: sol.rho,
        zeta_l: sol.zeta_l,
        zeta_r: sol.zeta_r,
        df_l: sol.df_l,
        df_r: sol.df_r,
        scalar_alpha_star: alpha_star,
        scalar_tau_star: tau_star,
    };
    write_output(args.out.as_deref(), &to_json(&report))
}

/// One key=value sweep config; n, p, h2, kappa may be comma-separated lists.
struct Sweep {
    ns: Vec<usize>,
    ps: Vec<usize>,
    h2s: Vec<f64>,
    kappas: Vec<f64>,
    replicates: usize,
    seed: u64,
    grid: GridConfig,
    noise_sigma2: f64,
    maf_range: (f64, f64),
}

fn parse_sweep(text: &str) -> Result<Sweep, HedeError> {
    let mut sweep = Sweep {
        ns: vec![],
        ps: vec![],
        h2s: vec![0.5],
        kappas: vec![0.1],
        replicates: 0,
        seed: 0,
        grid: GridConfig::default(),
        noise_sigma2: 1.0,
        maf_range: (0.01, 0.5),
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            HedeError::BadParameter(format!("line {}: expected key=value, got '{line}'", ln + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| {
            HedeError::BadParameter(format!("line {}: cannot parse {what} '{value}'", ln + 1))
        };
        let parse_list_usize = |v: &str| -> Result<Vec<usize>, HedeError> {
            v.split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| bad("list entry")))
                .collect()
        };
        let parse_list_f64 = |v: &str| -> Result<Vec<f64>, HedeError> {
            v.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| bad("list entry")))
                .collect()
        };
        match key {
            "n" => sweep.ns = parse_list_usize(value)?,
            "p" => sweep.ps = parse_list_usize(value)?,
            "h2" => sweep.h2s = parse_list_f64(value)?,
            "kappa" => sweep.kappas = parse_list_f64(value)?,
            "replicates" => sweep.replicates = value.parse().map_err(|_| bad("replicates"))?,
            "seed" => sweep.seed = value.parse().map_err(|_| bad("seed"))?,
            "t_min" => sweep.grid.t_min = value.parse().map_err(|_| bad("t_min"))?,
            "t_max" => sweep.grid.t_max = value.parse().map_err(|_| bad("t_max"))?,
            "log_step" => sweep.grid.log_step = value.parse().map_err(|_| bad("log_step"))?,
            "noise_sigma2" => {
                sweep.noise_sigma2 = value.parse().map_err(|_| bad("noise_sigma2"))?
            }
            "maf_low" => sweep.maf_range.0 = value.parse().map_err(|_| bad("maf_low"))?,
            "maf_high" => sweep.maf_range.1 = value.parse().map_err(|_| bad("maf_high"))?,
            _ => {
                return Err(HedeError::BadParameter(format!(
                    "line {}: unknown key '{key}'",
                    ln + 1
                )))
            }
        }
    }
    if sweep.ns.is_empty() || sweep.ps.is_empty() || sweep.h2s.is_empty() || sweep.kappas.is_empty()
    {
        return Err(HedeError::BadParameter(
            "sweep needs at least one value each for n, p, h2, kappa".into(),
        ));
    }
    if sweep.replicates == 0 {
        return Err(HedeError::BadParameter(
            "sweep needs replicates >= 1".into(),
        ));
    }
    Ok(sweep)
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), HedeError> {
    init_threads(args.threads);
    let text = std::fs::read_to_string(&args.config).map_err(|e| HedeError::Io {
        path: args.config.display().to_string(),
        source: e,
    })?;
    let sweep = parse_sweep(&text)?;

    let mut csv = String::from("scenario,replicate,h2_true,h2_hat,squared_error,status\n");
    let mut scenario_idx = 0u64;
    for &n in &sweep.ns {
        for &p in &sweep.ps {
            for &h2 in &sweep.h2s {
                for &kappa in &sweep.kappas {
                    let label = format!("n={n};p={p};h2={h2};kappa={kappa}");
                    for rep in 0..sweep.replicates {
                        let seed = replicate_seed(sweep.seed, scenario_idx, rep as u64);
                        let mut cfg = SimConfig::new(n, p, h2, kappa, seed);
                        cfg.noise_sigma2 = sweep.noise_sigma2;
                        cfg.maf_range = sweep.maf_range;
                        cfg.resample_empty_signal = true;
                        let row = match run_one_replicate(&cfg, &sweep.grid) {
                            Ok((truth, h2_hat)) => {
                                let err = h2_hat - truth;
                                format!(
                                    "{label},{rep},{truth},{h2_hat},{},ok\n",
                                    err * err
                                )
                            }
                            Err(e) => {
                                eprintln!("warning: {label} replicate {rep}: {e}");
                                format!("{label},{rep},,,,error:{}\n", error_tag(&e))
                            }
                        };
                        csv.push_str(&row);
                    }
                    scenario_idx += 1;
                }
            }
        }
    }
    std::fs::write(&args.out, csv).map_err(|e| HedeError::Io {
        path: args.out.display().to_string(),
        source: e,
    })
}

fn run_one_replicate(cfg: &SimConfig, grid: &GridConfig) -> Result<(f64, f64), HedeError> {
    let (data, truth) = hede::simulate_dataset(cfg, None)?;
    let (est, _) = run_hede_detailed(&data, grid)?;
    Ok((truth.h2_realized.unwrap_or(f64::NAN), est.h2))
}

fn error_tag(err: &HedeError) -> &'static str {
    match err {
        HedeError::EmptyGrid { .. } => "empty_grid",
        HedeError::NotConverged { .. } => "not_converged",
        HedeError::DegenerateDf { .. } => "degenerate_df",
        HedeError::NoBracket { .. } => "no_bracket",
        HedeError::SingularBlock(_) => "singular_block",
        HedeError::NoNonzeros => "no_nonzeros",
        _ => "input",
    }
}
