mod config;
mod error;
mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::ScenarioConfig;
use error::CliError;

/// Simulate back-action-cancelling oscillator pairs, reconstruct force
/// spectra and evaluate noise budgets.
#[derive(Parser)]
#[command(name = "qnc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its outputs.
    Run(Common),
    /// Check a scenario and print the resolved configuration.
    Validate(Common),
    /// Run a scenario over a range of values of one parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set measurement.k=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output.directory`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides QNC_SEED and `run.base_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Dotted config key to vary, e.g. `measurement.k`.
    #[arg(long)]
    param: String,
    /// Explicit comma-separated values.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to", "count"])]
    values: Vec<String>,
    #[arg(long, requires_all = ["to", "count"])]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
}

/// Scalar keys that may be absent from a resolved config because they default
/// to "derive from other values".
const OPTIONAL_KEYS: &[&str] = &[
    "oscillator.omega_eff",
    "force.support_max",
    "run.n_terms",
    "run.d_omega",
    "run.grid_max",
    "output.directory",
];

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Validation(_) => "validation error",
                CliError::Numerical(_) => "numerical error",
                CliError::Io { .. } => "i/o error",
            };
            eprintln!("qnc: {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            init_threads(args.threads)?;
            let cfg = load(&args, &[])?;
            let outcome = scenario::run_scenario(&cfg)?;
            let dir = output_dir(&args, &cfg);
            output::write_outcome(&dir, &cfg, &outcome)?;
            log::info!("wrote results to {}", dir.display());
            Ok(())
        }
        Command::Validate(args) => {
            let cfg = load(&args, &[])?;
            scenario::prepare(&cfg)?;
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Sweep(args) => sweep(args),
    }
}

fn init_threads(threads: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Validation(format!("--threads: {e}")))
}

fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))
}

/// Parse, apply overrides and seed precedence (`--seed` > QNC_SEED > file), resolve defaults.
fn load(args: &Common, extra: &[String]) -> Result<ScenarioConfig, CliError> {
    let text = read_config(&args.config)?;
    let mut overrides = args.overrides.clone();
    overrides.extend_from_slice(extra);
    let mut cfg = ScenarioConfig::from_toml(&text, &overrides)?;
    if let Ok(env) = std::env::var("QNC_SEED") {
        cfg.run.base_seed = env.trim().parse().map_err(|_| {
            CliError::Validation(format!("QNC_SEED must be an unsigned integer, got `{env}`"))
        })?;
    }
    if let Some(seed) = args.seed {
        cfg.run.base_seed = seed;
    }
    Ok(cfg.resolve())
}

fn output_dir(args: &Common, cfg: &ScenarioConfig) -> PathBuf {
    args.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
}

fn sweep_values(args: &SweepArgs) -> Result<Vec<String>, CliError> {
    if !args.values.is_empty() {
        return Ok(args.values.iter().map(|v| v.trim().to_string()).collect());
    }
    let (Some(from), Some(to), Some(count)) = (args.from, args.to, args.count) else {
        return Err(CliError::Validation(
            "sweep needs --values or --from/--to/--count".into(),
        ));
    };
    if count == 0 || !from.is_finite() || !to.is_finite() || from > to {
        return Err(CliError::Validation(format!(
            "empty sweep range: from {from} to {to} with {count} points"
        )));
    }
    Ok((0..count)
        .map(|i| {
            let v = if count == 1 {
                from
            } else {
                from + (to - from) * i as f64 / (count - 1) as f64
            };
            literal(v)
        })
        .collect())
}

/// Integral values are written as integers so they fit integer-typed keys too.
fn literal(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn check_param(base: &ScenarioConfig, param: &str) -> Result<(), CliError> {
    if OPTIONAL_KEYS.contains(&param) {
        return Ok(());
    }
    let table: toml::Table = base.to_toml().parse().expect("resolved config parses");
    let mut node = &toml::Value::Table(table);
    for key in param.split('.') {
        node = node.get(key).ok_or_else(|| {
            CliError::Validation(format!("--param `{param}` is not a config key"))
        })?;
    }
    if node.is_table() || node.is_array() {
        return Err(CliError::Validation(format!(
            "--param `{param}` is not a scalar"
        )));
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    init_threads(args.common.threads)?;
    let values = sweep_values(&args)?;
    if values.is_empty() {
        return Err(CliError::Validation("empty sweep: no values given".into()));
    }
    let base = load(&args.common, &[])?;
    check_param(&base, &args.param)?;
    let dir = output_dir(&args.common, &base);
    output::ensure_dir(&dir)?;
    output::write_text(&dir.join("resolved.toml"), &base.to_toml())?;

    let results: Vec<(String, Result<_, CliError>)> = values
        .par_iter()
        .map(|value| {
            let assignment = format!("{}={}", args.param, value);
            let result =
                load(&args.common, &[assignment]).and_then(|cfg| scenario::run_scenario(&cfg));
            (value.clone(), result)
        })
        .collect();

    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)
        .map_err(|e| CliError::io(path.display().to_string(), e.into()))?;
    let io = |e: csv::Error| CliError::io(path.display().to_string(), e.into());
    w.write_record(["parameter", "value", "status", "metric", "result", "detail"])
        .map_err(io)?;
    for (value, result) in &results {
        match result {
            Ok(outcome) => {
                for (metric, v) in &outcome.metrics {
                    w.write_record([
                        args.param.as_str(),
                        value,
                        "ok",
                        metric,
                        &output::num(*v),
                        "",
                    ])
                    .map_err(io)?;
                }
            }
            Err(e) => {
                log::warn!("sweep point {}={value} failed: {e}", args.param);
                w.write_record([
                    args.param.as_str(),
                    value,
                    "error",
                    "exit_code",
                    &e.exit_code().to_string(),
                    &e.to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush()
        .map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(())
}
