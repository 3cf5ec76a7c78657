//! Command-line front end.
//!
//! Exit codes: 0 success, 1 property failure (`check`), 2 configuration or
//! usage error, 3 numerical abort.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checks;
use crate::error::ExperimentError;
use crate::experiment::{self, metrics, ExperimentConfig, ExperimentResult, Metric, SvgOptions, SweepConfig};

pub const OUT_DIR_ENV: &str = "ACCEL_ALLOC_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Residual level used for the time-to-threshold column of `compare`.
const COMPARE_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(name = "accel-alloc", version, about = "Signum-accelerated distributed resource allocation simulator")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every method of a config and write metrics, plot, final states and a summary.
    Run(RunArgs),
    /// Like `run`, plus a ranking of the methods.
    Compare(RunArgs),
    /// Run a grid over alpha, beta and eta around the first method.
    Sweep(SweepArgs),
    /// Solve the centralized problem and print the optimum.
    Oracle(SourceArgs),
    /// Run the randomized property suite.
    Check(CheckArgs),
    /// Print a built-in preset, or list them when no name is given.
    Preset { name: Option<String> },
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// TOML experiment config.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    pub preset: Option<String>,
    /// `key=value` override applied after loading; repeatable, last one wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Static graph from an edge-list file.
    #[arg(long)]
    pub graph_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Output directory (default: a timestamped directory under $ACCEL_ALLOC_OUT_DIR or ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated alpha values.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Comma-separated beta values.
    #[arg(long)]
    pub beta: Option<String>,
    /// Comma-separated eta values.
    #[arg(long)]
    pub eta: Option<String>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        let code = match e {
            ExperimentError::Dynamics { .. } | ExperimentError::Oracle(_) => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run(args) => cmd_run(&args, false),
        Command::Compare(args) => cmd_run(&args, true),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Check(args) => cmd_check(args.seed, args.trials),
        Command::Preset { name } => cmd_preset(name.as_deref()),
    }
}

pub fn load_config(source: &SourceArgs) -> Result<ExperimentConfig, CliError> {
    let cfg = match (&source.config, &source.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => experiment::preset(name)?,
        _ => return Err(CliError::config("exactly one of --config or --preset is required")),
    };
    let mut cfg = cfg.with_overrides(&source.overrides)?;
    if let Some(path) = &source.graph_file {
        cfg.graph.file = Some(path.clone());
        cfg.graph.schedule_len = 1;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn output_dir(out: &Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = match (out, &cfg.output.dir) {
        (Some(d), _) | (None, Some(d)) => d.clone(),
        (None, None) => {
            let base = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0);
            base.join(format!("{}-{stamp}", cfg.name))
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"))
}

pub fn summary_text(cfg: &ExperimentConfig, result: &ExperimentResult) -> String {
    let sc = &result.scenario;
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", cfg.name);
    let _ = writeln!(
        s,
        "master seed: {} (cost {}, graph {}, init {})",
        cfg.seed, sc.seeds.cost, sc.seeds.graph, sc.seeds.init
    );
    let _ = writeln!(s, "agents: {}  demand: {}  steps: {}", cfg.n, cfg.demand, cfg.steps);
    let _ = writeln!(
        s,
        "oracle: lambda* = {:.12e}  F* = {:.12e}  kkt residual = {:.3e}",
        sc.oracle.lambda_star, sc.oracle.f_star, sc.oracle.residual_kkt
    );
    let _ = writeln!(
        s,
        "{:<28} {:>10} {:>14} {:>22} {:>22}  status",
        "method", "converged", "converged_at", "terminal_residual", "max_feasibility_gap"
    );
    for o in &result.outcomes {
        let status = match &o.abort {
            None => "ok".to_string(),
            Some(e) => format!("aborted: {e}"),
        };
        let _ = writeln!(
            s,
            "{:<28} {:>10} {:>14} {:>22} {:>22}  {status}",
            o.method.label,
            if o.converged_at.is_some() { "yes" } else { "no" },
            o.converged_at.map_or_else(|| "-".to_string(), |k| k.to_string()),
            fmt_opt(o.terminal_residual()),
            format!("{:.6e}", o.max_feasibility_gap),
        );
    }
    let warnings: Vec<String> = result
        .outcomes
        .iter()
        .filter_map(|o| o.warning.as_ref().map(|w| format!("{}: {w}", o.method.label)))
        .collect();
    if !warnings.is_empty() {
        let _ = writeln!(s, "warnings:");
        for w in warnings {
            let _ = writeln!(s, "  {w}");
        }
    }
    s
}

fn ranking_text(result: &ExperimentResult) -> String {
    let mut rows: Vec<(String, Option<f64>, Option<f64>)> = result
        .outcomes
        .iter()
        .map(|o| {
            (
                o.method.label.clone(),
                metrics::time_to_reach(&o.records, COMPARE_THRESHOLD),
                o.terminal_residual(),
            )
        })
        .collect();
    rows.sort_by(|a, b| {
        let ka = a.1.unwrap_or(f64::INFINITY);
        let kb = b.1.unwrap_or(f64::INFINITY);
        ka.total_cmp(&kb).then_with(|| a.0.cmp(&b.0))
    });
    let mut s = String::new();
    let _ = writeln!(s, "{:<28} {:>22} {:>22}", "method", format!("time_to_{COMPARE_THRESHOLD:e}"), "terminal_residual");
    for (label, t, r) in rows {
        let _ = writeln!(s, "{label:<28} {:>22} {:>22}", fmt_opt(t), fmt_opt(r));
    }
    s
}

fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<String, CliError> {
    let records = result.records();
    metrics::write_csv(&records, &dir.join("metrics.csv"))?;
    if !records.is_empty() {
        let svg = experiment::render_svg(
            &records,
            &SvgOptions {
                log_y: cfg.output.log_y,
                title: format!("{}: residual F(x) - F*", cfg.name),
                which: Metric::Residual,
            },
        )?;
        std::fs::write(dir.join("residual.svg"), svg).map_err(ExperimentError::from)?;
    }
    experiment::write_state_csv(result, &dir.join("state.csv"))?;
    let summary = summary_text(cfg, result);
    std::fs::write(dir.join("summary.txt"), &summary).map_err(ExperimentError::from)?;
    Ok(summary)
}

fn abort_status(result: &ExperimentResult) -> i32 {
    match result.first_abort() {
        Some((label, e)) => {
            eprintln!("error: method {label:?} aborted: {e}");
            EXIT_NUMERICAL
        }
        None => EXIT_OK,
    }
}

pub fn cmd_run(args: &RunArgs, compare: bool) -> Result<i32, CliError> {
    let cfg = load_config(&args.source)?;
    if compare && cfg.methods.len() < 2 {
        return Err(CliError::config("compare needs at least two methods"));
    }
    let dir = output_dir(&args.out, &cfg)?;
    log::info!("running {} method(s) for {} steps into {}", cfg.methods.len(), cfg.steps, dir.display());
    let result = experiment::run_experiment(&cfg)?;
    let summary = write_outputs(&cfg, &result, &dir)?;
    print!("{summary}");
    if compare {
        let ranking = ranking_text(&result);
        std::fs::write(dir.join("compare.txt"), &ranking).map_err(ExperimentError::from)?;
        print!("{ranking}");
    }
    println!("outputs written to {}", dir.display());
    Ok(abort_status(&result))
}

fn parse_list(name: &str, text: &Option<String>) -> Result<Option<Vec<f64>>, CliError> {
    let Some(text) = text else { return Ok(None) };
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::config(format!("--{name}: {s:?} is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(values))
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let cfg = load_config(&args.run.source)?;
    let cli_grid = SweepConfig {
        alpha: parse_list("alpha", &args.alpha)?,
        beta: parse_list("beta", &args.beta)?,
        eta: parse_list("eta", &args.eta)?,
    };
    let from_cli = cli_grid.alpha.is_some() || cli_grid.beta.is_some() || cli_grid.eta.is_some();
    let grid = match (from_cli, &cfg.sweep) {
        (true, _) => cli_grid,
        (false, Some(g)) => g.clone(),
        (false, None) => return Err(CliError::config("no sweep grid: pass --alpha/--beta/--eta or add a [sweep] section")),
    };
    let expanded = experiment::expand_sweep(&cfg, &grid)?;
    let dir = output_dir(&args.run.out, &expanded)?;
    let result = experiment::run_experiment(&expanded)?;
    let summary = write_outputs(&expanded, &result, &dir)?;
    experiment::write_sweep_csv(&result.outcomes, &dir.join("sweep.csv"))?;
    print!("{summary}");
    print!("{}", ranking_text(&result));
    println!("outputs written to {}", dir.display());
    Ok(abort_status(&result))
}

pub fn cmd_oracle(source: &SourceArgs) -> Result<i32, CliError> {
    let cfg = load_config(source)?;
    let sc = experiment::build_scenario(&cfg)?;
    let o = &sc.oracle;
    let (lo, hi) = o
        .x_star
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!("lambda*   {:.15e}", o.lambda_star);
    println!("F*        {:.15e}", o.f_star);
    println!("sum x*    {:.15e} (demand {})", o.x_star.iter().sum::<f64>(), cfg.demand);
    println!("x* range  [{lo:.6}, {hi:.6}]");
    println!("kkt residual {:.3e}  feasibility gap {:.3e}  iterations {}", o.residual_kkt, o.feasibility_gap, o.iterations);
    for (i, x) in o.x_star.iter().enumerate() {
        println!("x*[{i}] = {x:.12e}");
    }
    Ok(EXIT_OK)
}

pub fn cmd_check(seed: u64, trials: usize) -> Result<i32, CliError> {
    if trials == 0 {
        return Err(CliError::config("--trials must be >= 1"));
    }
    let outcomes = checks::run_suite(seed, trials);
    println!("{:<28} {:>8} {:>9}  result", "property", "trials", "failures");
    for o in &outcomes {
        println!(
            "{:<28} {:>8} {:>9}  {}",
            o.name,
            o.trials,
            o.failures,
            if o.passed() { "PASS" } else { "FAIL" }
        );
    }
    let mut code = EXIT_OK;
    for o in outcomes.iter().filter(|o| !o.passed()) {
        if let Some((trial_seed, msg)) = &o.first_failure {
            eprintln!("property {:?} failed (suite seed {seed}, trial seed {trial_seed}): {msg}", o.name);
        }
        code = EXIT_PROPERTY;
    }
    Ok(code)
}

pub fn cmd_preset(name: Option<&str>) -> Result<i32, CliError> {
    match name {
        None => {
            for n in experiment::PRESET_NAMES {
                println!("{n}");
            }
        }
        Some(n) => {
            let text = experiment::preset_text(n).ok_or_else(|| {
                CliError::config(format!("unknown preset {n:?} (known: {})", experiment::PRESET_NAMES.join(", ")))
            })?;
            print!("{text}");
        }
    }
    Ok(EXIT_OK)
}
