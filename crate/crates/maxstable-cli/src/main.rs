//! Command-line driver: simulation, forecasting, penalty tuning, margin
//! fitting, metric utilities, and rainfall ingestion, with a reproducible
//! run manifest alongside every output file.
//!
//! Every command takes its parameters from flags, from a JSON file passed
//! as `--config`, or both; explicit flags win over file values. Exit code
//! 0 means success, 1 a runtime failure, and 2 a usage problem.

use std::fs;
use std::fs::File;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maxstable::error::Error;
use maxstable::frechet::{fit_quasi_ml, FrechetParams};
use maxstable::metrics::{
    davis_resnick_from_excursion, excursion_empirical, excursion_from_davis_resnick,
};
use maxstable::predict::{forecast_path, forecast_field_2d, FieldForecastConfig, Method, OptimizerConfig, Variant};
use maxstable::rainfall::{
    ingest_rainfall, rainfall_forecast, read_rainfall_csv, AnnualSeries, RainfallForecastConfig,
};
use maxstable::simulate::{simulate_max_stable, GridSpec, Path};
use maxstable::taildep::{calibrate_sigma, extremal_coefficient, ModelKind, ModelSpec};
use maxstable::tune::tune_gamma_with;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

mod manifest;

/// Errors split by exit code: usage problems exit 2, runtime failures 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(Error::Io(e))
    }
}

#[derive(Parser)]
#[command(
    name = "maxstable",
    version,
    about = "Max-stable field simulation, max-linear forecasting, and penalty tuning",
    arg_required_else_help = true
)]
struct Cli {
    /// Thread-pool size for parallel sections (default: all cores).
    #[arg(long, global = true, env = "MAXSTABLE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a max-stable realization and write it as CSV.
    Simulate(SimulateArgs),
    /// Forecast steps beyond an observed series by max-linear prediction.
    Forecast(ForecastArgs),
    /// Extend an observed square lattice outward by max-linear prediction.
    #[command(name = "forecast2d")]
    Forecast2d(Forecast2dArgs),
    /// Sweep the penalty weight on simulated series and report the minimizer.
    TuneGamma(TuneGammaArgs),
    /// Fit a shifted Fréchet margin by quasi-maximum likelihood.
    FitFrechet(FitFrechetArgs),
    /// Metric curves and conversions.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Assemble one annual rainfall series from station records.
    Ingest(IngestArgs),
}

fn parse_model(s: &str) -> Result<ModelKind, Error> {
    s.parse()
}

fn parse_variant(s: &str) -> Result<Variant, Error> {
    s.parse()
}

fn parse_method(s: &str) -> Result<Method, Error> {
    s.parse()
}

/// Penalty weight: a number, or `auto` to run the tuning sweep first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaArg {
    Auto,
    Value(f64),
}

fn parse_gamma(s: &str) -> Result<GammaArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(GammaArg::Auto);
    }
    s.parse::<f64>()
        .map(GammaArg::Value)
        .map_err(|_| format!("expected a number or 'auto', got '{s}'"))
}

/// Marginal handling for series forecasts.
#[derive(Debug, Clone, Copy, PartialEq, clap::ValueEnum)]
pub enum Margin {
    /// Values already carry a standard alpha-Fréchet margin.
    Unit,
    /// Fit a shifted Fréchet margin first and forecast on the
    /// standardized scale, with a bootstrap envelope.
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, clap::ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
}

/// Exactly one of the two ways to pin the model's dependence strength.
#[derive(Args, Clone, Copy)]
#[group(multiple = false)]
struct DependenceLevel {
    /// Extremal coefficient at unit lag; the volatility is calibrated to it.
    #[arg(long)]
    theta: Option<f64>,
    /// Volatility parameter, given directly.
    #[arg(long)]
    sigma: Option<f64>,
}

/// Optimizer overrides layered over the defaults (or over a config file's
/// `optimizer` object).
#[derive(Args, Clone, Copy)]
struct OptimizerArgs {
    /// Gradient method: adam or sgd.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Step size.
    #[arg(long)]
    step: Option<f64>,
    /// Non-improving iterations tolerated before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Optimize weights on their natural scale instead of log scale.
    #[arg(long)]
    plain_scale: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file providing any of this command's parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Process family: br, smith, or eg.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[command(flatten)]
    level: DependenceLevel,
    /// Margin shape: output values are alpha-Fréchet distributed.
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of sites of a 1D series.
    #[arg(long, conflicts_with = "side")]
    length: Option<usize>,
    /// Side of a square lattice.
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ForecastArgs {
    /// JSON file providing any of this command's parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Observed series CSV (`site_index,value` or `year,value`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Marginal handling: unit (default) or fitted.
    #[arg(long, value_enum)]
    margin: Option<Margin>,
    /// Forecast window length.
    #[arg(long)]
    n: Option<usize>,
    /// Number of learning samples.
    #[arg(long = "N", alias = "num-samples")]
    num_samples: Option<usize>,
    /// Steps to forecast.
    #[arg(long)]
    horizon: Option<usize>,
    /// Penalty weight, or `auto` to tune it first (needs --model and
    /// --theta/--sigma).
    #[arg(long, value_parser = parse_gamma)]
    gamma: Option<GammaArg>,
    /// Margin shape of the input values (unit margin only).
    #[arg(long)]
    alpha: Option<f64>,
    /// Target estimator: bootstrap or non-bootstrap (unit margin only).
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Bootstrap forecasts folded into the envelope (fitted margin only).
    #[arg(long)]
    envelope_runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Process family for --gamma auto.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[command(flatten)]
    level: DependenceLevel,
    /// Tuning replications for --gamma auto.
    #[arg(long = "K", alias = "replications")]
    replications: Option<usize>,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Forecast2dArgs {
    /// JSON file providing any of this command's parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Observed lattice CSV (`site_index,site_index2,value`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Extension width: an n x n grid grows to (n+m) x (n+m).
    #[arg(long)]
    horizon: Option<usize>,
    /// Number of learning samples per target.
    #[arg(long = "N", alias = "num-samples")]
    num_samples: Option<usize>,
    /// Margin shape of the input values.
    #[arg(long)]
    alpha: Option<f64>,
    /// Penalty weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// Target estimator: bootstrap or non-bootstrap.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    /// Output layout: csv rows or a json matrix.
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneGammaArgs {
    /// JSON file providing any of this command's parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Process family: br, smith, or eg.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[command(flatten)]
    level: DependenceLevel,
    /// Monte Carlo replications of the sweep.
    #[arg(long = "K", alias = "replications")]
    replications: Option<usize>,
    /// Largest penalty weight of the integer grid 0..=gamma-max.
    #[arg(long)]
    gamma_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    /// Output CSV path for the sweep curves.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitFrechetArgs {
    /// JSON file providing any of this command's parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample CSV (`year,value` or `site_index,value`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Optional JSON output path for the fitted parameters.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Closed-form benchmark excursion curve over forecast steps.
    Curve(CurveArgs),
    /// Convert between the excursion metric and the spectral distance.
    Convert(ConvertArgs),
    /// Empirical excursion metric between truth and prediction files.
    Empirical(EmpiricalArgs),
}

#[derive(Args)]
struct CurveArgs {
    /// JSON file providing any of this command's parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Process family: br, smith, or eg.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[command(flatten)]
    level: DependenceLevel,
    /// Number of forecast steps (lags 1..=steps).
    #[arg(long)]
    steps: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConvertArgs {
    /// Excursion metric value to convert.
    #[arg(long)]
    excursion: Option<f64>,
    /// Spectral (Davis-Resnick) distance to convert.
    #[arg(long)]
    davis_resnick: Option<f64>,
}

#[derive(Args)]
struct EmpiricalArgs {
    /// Truth series CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Prediction series CSV.
    #[arg(long)]
    predicted: PathBuf,
    /// Marginal cdf parameters (defaults: standard unit Fréchet).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Optional JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// JSON file providing any of this command's parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Station records CSV with header `year,station,value`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Station whose values are taken verbatim when present.
    #[arg(long)]
    primary: Option<String>,
    /// Output CSV path for the assembled series.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Fails only if a pool already exists, which keeps that pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(error)) => {
            eprintln!("error: {error}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => run_simulate(args),
        Command::Forecast(args) => run_forecast(args),
        Command::Forecast2d(args) => run_forecast2d(args),
        Command::TuneGamma(args) => run_tune(args),
        Command::FitFrechet(args) => run_fit(args),
        Command::Metrics(MetricsCommand::Curve(args)) => run_curve(args),
        Command::Metrics(MetricsCommand::Convert(args)) => run_convert(args),
        Command::Metrics(MetricsCommand::Empirical(args)) => run_empirical(args),
        Command::Ingest(args) => run_ingest(args),
    }
}

// ---------------------------------------------------------------------------
// Parameter resolution
// ---------------------------------------------------------------------------

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

/// Deserialize a command's JSON parameter file, or defaults when absent.
fn load_config<T: serde::de::DeserializeOwned + Default>(
    path: Option<&PathBuf>,
) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Runtime(Error::Parse(format!("config file {}: {e}", path.display())))
    })
}

/// Model resolution: the kind comes from flags or the config file; the
/// theta/sigma pair is taken from flags when either flag is set, else from
/// the file, and exactly one of the two must be given. A theta is
/// calibrated to the matching volatility.
fn resolve_model(
    flag_model: Option<ModelKind>,
    level: &DependenceLevel,
    cfg_model: Option<&str>,
    cfg_theta: Option<f64>,
    cfg_sigma: Option<f64>,
    dim: u8,
) -> Result<(ModelSpec, Option<f64>), CliError> {
    let kind = match flag_model {
        Some(kind) => kind,
        None => match cfg_model {
            Some(name) => name.parse().map_err(CliError::Runtime)?,
            None => return Err(CliError::Usage("--model is required".into())),
        },
    };
    let (theta, sigma) = if level.theta.is_some() || level.sigma.is_some() {
        (level.theta, level.sigma)
    } else {
        if cfg_theta.is_some() && cfg_sigma.is_some() {
            return Err(CliError::Usage(
                "config file sets both theta and sigma".into(),
            ));
        }
        (cfg_theta, cfg_sigma)
    };
    let (theta, sigma) = match (theta, sigma) {
        (Some(t), None) => (Some(t), calibrate_sigma(kind, t)?),
        (None, Some(s)) => (None, s),
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --theta or --sigma".into(),
            ))
        }
    };
    Ok((ModelSpec::new(kind, dim, sigma)?, theta))
}

/// Seed precedence: flag, then config-file `seed`, then the config file's
/// optimizer seed, then 0.
fn resolve_seed(
    flag: Option<u64>,
    cfg_seed: Option<u64>,
    cfg_optimizer: &Option<OptimizerConfig>,
) -> u64 {
    flag.or(cfg_seed)
        .or(cfg_optimizer.as_ref().map(|o| o.seed))
        .unwrap_or(0)
}

fn resolve_optimizer(
    args: &OptimizerArgs,
    cfg: Option<OptimizerConfig>,
    seed: u64,
) -> OptimizerConfig {
    let mut optimizer = cfg.unwrap_or_default();
    if let Some(method) = args.method {
        optimizer.method = method;
    }
    if let Some(step) = args.step {
        optimizer.step = step;
    }
    if let Some(patience) = args.patience {
        optimizer.patience = patience;
    }
    if let Some(max_iters) = args.max_iters {
        optimizer.max_iters = max_iters;
    }
    if args.plain_scale {
        optimizer.reparametrize_log = false;
    }
    optimizer.seed = seed;
    optimizer
}

/// Run `f` against an in-memory buffer and write the result to `out` in
/// one step, so partially written files never pair with a manifest.
fn write_file<F>(out: &FsPath, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> maxstable::error::Result<()>,
{
    let mut buffer = Vec::new();
    f(&mut buffer)?;
    fs::write(out, buffer)?;
    Ok(())
}

fn optimizer_json(optimizer: &OptimizerConfig) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(optimizer).map_err(|e| CliError::Runtime(Error::Json(e)))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateFile {
    model: Option<String>,
    theta: Option<f64>,
    sigma: Option<f64>,
    alpha: Option<f64>,
    length: Option<usize>,
    side: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg: SimulateFile = load_config(args.config.as_ref())?;
    // Like theta/sigma, the length/side pair comes from flags when either
    // flag is set, else from the file.
    let extent = if args.length.is_some() || args.side.is_some() {
        (args.length, args.side)
    } else {
        if cfg.length.is_some() && cfg.side.is_some() {
            return Err(CliError::Usage(
                "config file sets both length and side".into(),
            ));
        }
        (cfg.length, cfg.side)
    };
    let (grid, dim) = match extent {
        (Some(length), None) => (GridSpec::line(length)?, 1),
        (None, Some(side)) => (GridSpec::lattice(side)?, 2),
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --length or --side".into(),
            ))
        }
    };
    let (spec, theta) =
        resolve_model(args.model, &args.level, cfg.model.as_deref(), cfg.theta, cfg.sigma, dim)?;
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(1.0);
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(CliError::Runtime(Error::InvalidParameter(format!(
            "margin shape must be a finite positive number, got {alpha}"
        ))));
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let out = require(args.out.or(cfg.out), "--out")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut realization = simulate_max_stable(&spec, &grid, &mut rng)?;
    if alpha != 1.0 {
        let values = realization.values().iter().map(|v| v.powf(1.0 / alpha)).collect();
        realization = Path::new(realization.grid().clone(), values)?;
    }
    write_file(&out, |w| realization.write_csv(w))?;
    let extent_json = match grid {
        GridSpec::Line { .. } => json!({ "length": realization.len() }),
        GridSpec::Lattice { side } => json!({ "side": side }),
    };
    manifest::write(
        &out,
        "simulate",
        json!({
            "model": spec.kind.as_str(),
            "theta": theta,
            "sigma": spec.sigma,
            "dim": dim,
            "alpha": alpha,
            "extent": extent_json,
            "seed": seed,
        }),
        Some(seed),
    )?;
    println!("wrote {} sites to {}", realization.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(untagged)]
enum GammaFile {
    Number(f64),
    Word(String),
}

impl GammaFile {
    fn to_arg(&self) -> Result<GammaArg, CliError> {
        match self {
            GammaFile::Number(v) => Ok(GammaArg::Value(*v)),
            GammaFile::Word(word) => {
                parse_gamma(word).map_err(|e| CliError::Runtime(Error::Parse(e)))
            }
        }
    }
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ForecastFile {
    input: Option<PathBuf>,
    margin: Option<String>,
    n: Option<usize>,
    num_samples: Option<usize>,
    horizon: Option<usize>,
    gamma: Option<GammaFile>,
    alpha: Option<f64>,
    variant: Option<String>,
    envelope_runs: Option<usize>,
    seed: Option<u64>,
    model: Option<String>,
    theta: Option<f64>,
    sigma: Option<f64>,
    replications: Option<usize>,
    optimizer: Option<OptimizerConfig>,
    out: Option<PathBuf>,
}

fn run_forecast(args: ForecastArgs) -> Result<(), CliError> {
    let cfg: ForecastFile = load_config(args.config.as_ref())?;
    let input = require(args.input.clone().or(cfg.input.clone()), "--input")?;
    let out = require(args.out.clone().or(cfg.out.clone()), "--out")?;
    let margin = match args.margin {
        Some(margin) => margin,
        None => match cfg.margin.as_deref() {
            Some("unit") => Margin::Unit,
            Some("fitted") => Margin::Fitted,
            Some(other) => {
                return Err(CliError::Runtime(Error::Parse(format!(
                    "unknown margin '{other}' (expected unit or fitted)"
                ))))
            }
            None => Margin::Unit,
        },
    };
    match margin {
        Margin::Unit => {
            if args.envelope_runs.is_some() {
                return Err(CliError::Usage(
                    "--envelope-runs applies to --margin fitted".into(),
                ));
            }
        }
        Margin::Fitted => {
            if args.alpha.is_some() {
                return Err(CliError::Usage(
                    "--alpha applies to --margin unit; the fitted margin supplies it".into(),
                ));
            }
            if args.variant.is_some() {
                return Err(CliError::Usage(
                    "--variant applies to --margin unit; the fitted margin runs both".into(),
                ));
            }
        }
    }
    let seed = resolve_seed(args.seed, cfg.seed, &cfg.optimizer);
    let optimizer = resolve_optimizer(&args.optimizer, cfg.optimizer.clone(), seed);
    let gamma_arg = match args.gamma {
        Some(gamma) => gamma,
        None => match &cfg.gamma {
            Some(gamma) => gamma.to_arg()?,
            None => {
                return Err(CliError::Usage(
                    "--gamma is required (a number or 'auto')".into(),
                ))
            }
        },
    };
    let (gamma, tune_json) = match gamma_arg {
        GammaArg::Value(v) => (v, serde_json::Value::Null),
        GammaArg::Auto => {
            let (spec, theta) = resolve_model(
                args.model,
                &args.level,
                cfg.model.as_deref(),
                cfg.theta,
                cfg.sigma,
                1,
            )?;
            let replications = args.replications.or(cfg.replications).unwrap_or(100);
            let grid: Vec<f64> = (0..=20).map(f64::from).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sweep = tune_gamma_with(&spec, &grid, replications, &optimizer, &mut rng)?;
            println!("gamma_opt = {}", sweep.gamma_opt);
            let info = json!({
                "model": spec.kind.as_str(),
                "theta": theta,
                "sigma": spec.sigma,
                "replications": replications,
            });
            (sweep.gamma_opt, info)
        }
    };
    let input_hash = manifest::file_hash(&input)?;

    match margin {
        Margin::Unit => {
            let n = args.n.or(cfg.n).unwrap_or(2);
            let num_samples = args.num_samples.or(cfg.num_samples).unwrap_or(100);
            let horizon = args.horizon.or(cfg.horizon).unwrap_or(1);
            let alpha = args.alpha.or(cfg.alpha).unwrap_or(1.0);
            let variant = match args.variant {
                Some(variant) => variant,
                None => match cfg.variant.as_deref() {
                    Some(name) => name.parse().map_err(CliError::Runtime)?,
                    None => Variant::NonBootstrap,
                },
            };
            let series = Path::read_csv(File::open(&input)?)?;
            let predictions =
                forecast_path(&series, horizon, n, num_samples, gamma, alpha, variant, &optimizer)?;
            write_file(&out, |w| {
                writeln!(w, "step,prediction")?;
                for (i, p) in predictions.iter().enumerate() {
                    writeln!(w, "{},{p:?}", i + 1)?;
                }
                Ok(())
            })?;
            manifest::write(
                &out,
                "forecast",
                json!({
                    "margin": "unit",
                    "input": input,
                    "input_hash": input_hash,
                    "n": n,
                    "num_samples": num_samples,
                    "horizon": horizon,
                    "gamma": gamma,
                    "tuned": tune_json,
                    "alpha": alpha,
                    "variant": variant.as_str(),
                    "optimizer": optimizer_json(&optimizer)?,
                }),
                Some(seed),
            )?;
            println!("wrote {horizon} predictions to {}", out.display());
        }
        Margin::Fitted => {
            let defaults = RainfallForecastConfig::default();
            let forecast_config = RainfallForecastConfig {
                window: args.n.or(cfg.n).unwrap_or(defaults.window),
                num_samples: args.num_samples.or(cfg.num_samples).unwrap_or(defaults.num_samples),
                horizon: args.horizon.or(cfg.horizon).unwrap_or(defaults.horizon),
                gamma,
                envelope_runs: args
                    .envelope_runs
                    .or(cfg.envelope_runs)
                    .unwrap_or(defaults.envelope_runs),
                optimizer: optimizer.clone(),
            };
            let series = read_annual_series(&input)?;
            let forecast = rainfall_forecast(&series, &forecast_config)?;
            write_file(&out, |w| forecast.write_csv(w))?;
            manifest::write(
                &out,
                "forecast",
                json!({
                    "margin": "fitted",
                    "input": input,
                    "input_hash": input_hash,
                    "n": forecast_config.window,
                    "num_samples": forecast_config.num_samples,
                    "horizon": forecast_config.horizon,
                    "gamma": gamma,
                    "tuned": tune_json,
                    "envelope_runs": forecast_config.envelope_runs,
                    "optimizer": optimizer_json(&optimizer)?,
                }),
                Some(seed),
            )?;
            let params = forecast.fit.params;
            println!(
                "fitted margin: alpha = {:.4}, mu = {:.4}, sigma = {:.4}",
                params.alpha, params.mu, params.sigma
            );
            println!(
                "wrote {} forecast years to {}",
                forecast_config.horizon,
                out.display()
            );
        }
    }
    Ok(())
}

/// Read a `year,value` (or `site_index,value`) CSV as a contiguous annual
/// series.
fn read_annual_series(path: &FsPath) -> Result<AnnualSeries, CliError> {
    let series = Path::read_csv(File::open(path)?)?;
    let sites = series.grid().as_line().ok_or_else(|| {
        CliError::Runtime(Error::Domain(
            "fitted-margin forecasting needs a 1D series".into(),
        ))
    })?;
    if sites.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(CliError::Runtime(Error::Domain(
            "annual series years must be contiguous".into(),
        )));
    }
    let first = i32::try_from(sites[0])
        .map_err(|_| CliError::Runtime(Error::Domain(format!("year {} out of range", sites[0]))))?;
    Ok(AnnualSeries::new(first, series.values().to_vec())?)
}

// ---------------------------------------------------------------------------
// forecast2d
// ---------------------------------------------------------------------------

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Forecast2dFile {
    input: Option<PathBuf>,
    horizon: Option<usize>,
    num_samples: Option<usize>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    variant: Option<String>,
    seed: Option<u64>,
    optimizer: Option<OptimizerConfig>,
    format: Option<String>,
    out: Option<PathBuf>,
}

fn run_forecast2d(args: Forecast2dArgs) -> Result<(), CliError> {
    let cfg: Forecast2dFile = load_config(args.config.as_ref())?;
    let input = require(args.input.clone().or(cfg.input.clone()), "--input")?;
    let out = require(args.out.clone().or(cfg.out.clone()), "--out")?;
    let horizon = require(args.horizon.or(cfg.horizon), "--horizon")?;
    let gamma = require(args.gamma.or(cfg.gamma), "--gamma")?;
    let seed = resolve_seed(args.seed, cfg.seed, &cfg.optimizer);
    let variant = match args.variant {
        Some(variant) => variant,
        None => match cfg.variant.as_deref() {
            Some(name) => name.parse().map_err(CliError::Runtime)?,
            None => Variant::NonBootstrap,
        },
    };
    let format = match args.format {
        Some(format) => format,
        None => match cfg.format.as_deref() {
            Some("csv") => OutFormat::Csv,
            Some("json") => OutFormat::Json,
            Some(other) => {
                return Err(CliError::Runtime(Error::Parse(format!(
                    "unknown format '{other}' (expected csv or json)"
                ))))
            }
            None => OutFormat::Csv,
        },
    };
    let field_config = FieldForecastConfig {
        horizon,
        num_samples: args.num_samples.or(cfg.num_samples).unwrap_or(100),
        alpha: args.alpha.or(cfg.alpha).unwrap_or(1.0),
        gamma,
        variant,
        optimizer: resolve_optimizer(&args.optimizer, cfg.optimizer.clone(), seed),
    };
    let field = Path::read_csv(File::open(&input)?)?;
    let extended = forecast_field_2d(&field, &field_config)?;
    match format {
        OutFormat::Csv => write_file(&out, |w| extended.write_csv(w))?,
        OutFormat::Json => write_file(&out, |w| extended.write_json_matrix(w))?,
    }
    manifest::write(
        &out,
        "forecast2d",
        json!({
            "input": input,
            "input_hash": manifest::file_hash(&input)?,
            "horizon": horizon,
            "num_samples": field_config.num_samples,
            "alpha": field_config.alpha,
            "gamma": gamma,
            "variant": variant.as_str(),
            "optimizer": optimizer_json(&field_config.optimizer)?,
        }),
        Some(seed),
    )?;
    println!("wrote {} sites to {}", extended.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// tune-gamma
// ---------------------------------------------------------------------------

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TuneFile {
    model: Option<String>,
    theta: Option<f64>,
    sigma: Option<f64>,
    replications: Option<usize>,
    gamma_max: Option<usize>,
    seed: Option<u64>,
    optimizer: Option<OptimizerConfig>,
    out: Option<PathBuf>,
}

fn run_tune(args: TuneGammaArgs) -> Result<(), CliError> {
    let cfg: TuneFile = load_config(args.config.as_ref())?;
    let (spec, theta) =
        resolve_model(args.model, &args.level, cfg.model.as_deref(), cfg.theta, cfg.sigma, 1)?;
    let replications = args.replications.or(cfg.replications).unwrap_or(1000);
    let gamma_max = args.gamma_max.or(cfg.gamma_max).unwrap_or(20);
    let grid: Vec<f64> = (0..=gamma_max).map(|g| g as f64).collect();
    let seed = resolve_seed(args.seed, cfg.seed, &cfg.optimizer);
    let optimizer = resolve_optimizer(&args.optimizer, cfg.optimizer.clone(), seed);
    let out = require(args.out.clone().or(cfg.out.clone()), "--out")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sweep = tune_gamma_with(&spec, &grid, replications, &optimizer, &mut rng)?;
    write_file(&out, |w| sweep.write_csv(w))?;
    manifest::write(
        &out,
        "tune-gamma",
        json!({
            "model": spec.kind.as_str(),
            "theta": theta,
            "sigma": spec.sigma,
            "replications": replications,
            "gamma_max": gamma_max,
            "optimizer": optimizer_json(&optimizer)?,
        }),
        Some(seed),
    )?;
    println!("gamma_opt = {}", sweep.gamma_opt);
    println!("wrote sweep curves to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-frechet
// ---------------------------------------------------------------------------

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitFile {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn run_fit(args: FitFrechetArgs) -> Result<(), CliError> {
    let cfg: FitFile = load_config(args.config.as_ref())?;
    let input = require(args.input.clone().or(cfg.input.clone()), "--input")?;
    let series = Path::read_csv(File::open(&input)?)?;
    let fit = fit_quasi_ml(series.values())?;
    let params = fit.params;
    println!(
        "alpha = {:?}, mu = {:?}, sigma = {:?}, log_likelihood = {:?}",
        params.alpha, params.mu, params.sigma, fit.log_likelihood
    );
    if let Some(out) = args.out.or(cfg.out) {
        let value = json!({
            "alpha": params.alpha,
            "mu": params.mu,
            "sigma": params.sigma,
            "log_likelihood": fit.log_likelihood,
        });
        let mut text =
            serde_json::to_string_pretty(&value).map_err(|e| CliError::Runtime(Error::Json(e)))?;
        text.push('\n');
        fs::write(&out, text)?;
        manifest::write(
            &out,
            "fit-frechet",
            json!({ "input": input, "input_hash": manifest::file_hash(&input)? }),
            None,
        )?;
        println!("wrote fit to {}", out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CurveFile {
    model: Option<String>,
    theta: Option<f64>,
    sigma: Option<f64>,
    steps: Option<usize>,
    out: Option<PathBuf>,
}

fn run_curve(args: CurveArgs) -> Result<(), CliError> {
    let cfg: CurveFile = load_config(args.config.as_ref())?;
    let (spec, theta) =
        resolve_model(args.model, &args.level, cfg.model.as_deref(), cfg.theta, cfg.sigma, 1)?;
    let steps = args.steps.or(cfg.steps).unwrap_or(20);
    if steps == 0 {
        return Err(CliError::Runtime(Error::InvalidParameter(
            "need at least one step".into(),
        )));
    }
    let out = require(args.out.clone().or(cfg.out.clone()), "--out")?;
    write_file(&out, |w| {
        writeln!(w, "step,extremal_coefficient,excursion")?;
        for step in 1..=steps {
            let coefficient = extremal_coefficient(&spec, step as f64);
            let excursion = 1.0 - 2.0 / (coefficient + 1.0);
            writeln!(w, "{step},{coefficient:?},{excursion:?}")?;
        }
        Ok(())
    })?;
    manifest::write(
        &out,
        "metrics curve",
        json!({
            "model": spec.kind.as_str(),
            "theta": theta,
            "sigma": spec.sigma,
            "steps": steps,
        }),
        None,
    )?;
    println!("wrote {steps} benchmark rows to {}", out.display());
    Ok(())
}

fn run_convert(args: ConvertArgs) -> Result<(), CliError> {
    let (excursion, distance) = match (args.excursion, args.davis_resnick) {
        (Some(e), None) => (e, davis_resnick_from_excursion(e)?),
        (None, Some(d)) => (excursion_from_davis_resnick(d)?, d),
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --excursion or --davis-resnick".into(),
            ))
        }
    };
    println!("excursion = {excursion:?}");
    println!("davis_resnick = {distance:?}");
    Ok(())
}

fn run_empirical(args: EmpiricalArgs) -> Result<(), CliError> {
    let truth = Path::read_csv(File::open(&args.truth)?)?;
    let predicted = Path::read_csv(File::open(&args.predicted)?)?;
    let marginal = FrechetParams::new(args.alpha, args.mu, args.sigma)?;
    let metric = excursion_empirical(truth.values(), predicted.values(), &marginal)?;
    match metric.std_error {
        Some(se) => println!("excursion = {:?} (std error {:?})", metric.value, se),
        None => println!("excursion = {:?}", metric.value),
    }
    if let Some(out) = args.out {
        let value = json!({ "value": metric.value, "std_error": metric.std_error });
        let mut text =
            serde_json::to_string_pretty(&value).map_err(|e| CliError::Runtime(Error::Json(e)))?;
        text.push('\n');
        fs::write(&out, text)?;
        manifest::write(
            &out,
            "metrics empirical",
            json!({
                "truth": args.truth,
                "truth_hash": manifest::file_hash(&args.truth)?,
                "predicted": args.predicted,
                "predicted_hash": manifest::file_hash(&args.predicted)?,
                "alpha": args.alpha,
                "mu": args.mu,
                "sigma": args.sigma,
            }),
            None,
        )?;
        println!("wrote metric to {}", out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IngestFile {
    input: Option<PathBuf>,
    primary: Option<String>,
    out: Option<PathBuf>,
}

fn run_ingest(args: IngestArgs) -> Result<(), CliError> {
    let cfg: IngestFile = load_config(args.config.as_ref())?;
    let input = require(args.input.clone().or(cfg.input.clone()), "--input")?;
    let primary = require(args.primary.clone().or(cfg.primary.clone()), "--primary")?;
    let out = require(args.out.clone().or(cfg.out.clone()), "--out")?;
    let records = read_rainfall_csv(File::open(&input)?)?;
    let series = ingest_rainfall(&records, &primary)?;
    write_file(&out, |w| series.write_csv(w))?;
    manifest::write(
        &out,
        "ingest",
        json!({
            "input": input,
            "input_hash": manifest::file_hash(&input)?,
            "primary": primary,
        }),
        None,
    )?;
    println!(
        "assembled {} years {}..{} to {}",
        series.len(),
        series.first_year(),
        series.last_year(),
        out.display()
    );
    Ok(())
}
