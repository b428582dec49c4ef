//! Command-line entry point: `estimate` prices into moments, `solve` a single
//! program, `frontier` a τ sweep, `validate` a candidate by Monte Carlo.
//!
//! Configuration may come from a JSON file (`--config`), from the built-in
//! `--preset paper` dataset, or from flags; flags always win. Exit codes are
//! stable: 0 success, 2 input or configuration error, 3 infeasible program,
//! 4 solver non-convergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::frontier::{self, EmitFormat, FrontierKind};
use crate::market_data::{
    compute_returns, estimate_moments, moments_from_json, moments_to_json, parse_prices_csv,
    MomentEstimates, SamplingRule,
};
use crate::solver::{solve, SolveOptions, Solution, Status};
use crate::uncertainty::{model_from_json, BasicShifts, PerturbationFamily, UncertainReturnModel};
use crate::validator::{default_suite, report_to_json, report_to_text, validate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_MAX_ITER: i32 = 4;

#[derive(Parser)]
#[command(
    name = "ccportfolio",
    version,
    about = "Safe convex approximations of chance-constrained portfolios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate nominal return moments from a price CSV
    Estimate(EstimateArgs),
    /// Solve one portfolio program and print the solution as JSON
    Solve(SolveArgs),
    /// Sweep the target return and emit the efficient frontier
    Frontier(FrontierArgs),
    /// Monte Carlo check of a solved portfolio against the family
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Period {
    /// Keep the last observation of each calendar quarter
    Quarterly,
    /// Keep every k-th observation
    EveryKth,
}

#[derive(Args)]
struct EstimateArgs {
    /// Price history CSV with header `date,asset,price`
    #[arg(long)]
    prices: PathBuf,
    /// Sampling rule applied before differencing
    #[arg(long, value_enum, default_value = "quarterly")]
    period: Period,
    /// Step for the every-kth rule
    #[arg(long, default_value_t = 1)]
    every: usize,
    /// Write the moments JSON here as well as to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct ModelSource {
    /// JSON run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in dataset: `paper` loads the bundled three-asset study
    #[arg(long)]
    preset: Option<String>,
    /// Uncertain-return model JSON
    #[arg(long)]
    model: Option<PathBuf>,
    /// Nominal moments JSON (as produced by `estimate`)
    #[arg(long)]
    moments: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Surrogate kind: nominal, piecewise_linear, bernstein, piecewise_quadratic
    #[arg(long)]
    kind: Option<String>,
    /// Target return τ
    #[arg(long)]
    tau: Option<f64>,
    /// Confidence level β in (0, 1)
    #[arg(long)]
    beta: Option<f64>,
    /// Write the solution JSON here as well as to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FrontierArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Surrogate kind: nominal, piecewise_linear, bernstein, piecewise_quadratic
    #[arg(long)]
    kind: Option<String>,
    /// Sweep grid as start:end:step, e.g. 1.5:3.5:0.2
    #[arg(long)]
    tau_range: Option<String>,
    /// Confidence level β in (0, 1)
    #[arg(long)]
    beta: Option<f64>,
    /// Write the frontier table as CSV
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Write the frontier table as JSON
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Write the frontier chart as SVG
    #[arg(long)]
    out_svg: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Solution JSON (as produced by `solve`)
    #[arg(long)]
    solution: PathBuf,
    #[command(flatten)]
    source: ModelSource,
    /// Draws per distribution
    #[arg(long)]
    count: Option<usize>,
    /// Base RNG seed; each distribution derives its own stream
    #[arg(long)]
    seed: Option<u64>,
    /// Override the model's target return τ
    #[arg(long)]
    tau: Option<f64>,
    /// Write the report JSON here (text table always goes to stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// File counterpart of the flag set; any field may be omitted.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    preset: Option<String>,
    model: Option<PathBuf>,
    moments: Option<PathBuf>,
    kind: Option<String>,
    tau: Option<f64>,
    beta: Option<f64>,
    tau_range: Option<String>,
    count: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug)]
struct InputError(String);

macro_rules! input_error_from {
    ($($ty:ty),* $(,)?) => {$(
        impl From<$ty> for InputError {
            fn from(e: $ty) -> Self {
                InputError(e.to_string())
            }
        }
    )*};
}

input_error_from!(
    crate::approximation::ApproxError,
    crate::frontier::FrontierError,
    crate::market_data::MarketDataError,
    crate::uncertainty::ModelError,
    crate::validator::ValidatorError,
    String,
);

/// The three-asset quarterly study: nominal moments, diagonal shifts
/// (0.2, 0.1, 0.3), symmetric mean bounds ±(0.3, 0.2, 0.1), stds 0.1,
/// β = 0.95, and default target τ = 1.5.
pub fn paper_preset() -> (MomentEstimates, UncertainReturnModel) {
    let mu0 = DVector::from_vec(vec![2.609, -1.430, 6.329]);
    let sigma = DMatrix::from_row_slice(
        3,
        3,
        &[
            24.126, -1.460, 11.032, //
            -1.460, 8.237, 0.461, //
            11.032, 0.461, 18.034,
        ],
    );
    let moments = MomentEstimates::new(
        vec!["bank".into(), "pharma".into(), "it".into()],
        mu0.clone(),
        sigma,
    )
    .expect("preset moments are well formed");
    let model = UncertainReturnModel::new(
        mu0,
        BasicShifts::diagonal(&[0.2, 0.1, 0.3]).expect("preset shifts"),
        PerturbationFamily::new(
            DVector::from_vec(vec![-0.3, -0.2, -0.1]),
            DVector::from_vec(vec![0.3, 0.2, 0.1]),
            Some(DVector::from_vec(vec![0.1, 0.1, 0.1])),
        )
        .expect("preset family"),
        0.95,
        1.5,
    )
    .expect("preset model");
    (moments, model)
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, InputError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| InputError(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| InputError(format!("config {}: {e}", p.display())))
        }
    }
}

/// Resolves moments and model from preset, config file, and flags.
/// Precedence per value: explicit flag, then config file, then preset.
/// Moments stay optional because validation needs only the model.
fn resolve_inputs(
    source: &ModelSource,
    config: &FileConfig,
) -> Result<(Option<MomentEstimates>, UncertainReturnModel), InputError> {
    let preset = source.preset.as_ref().or(config.preset.as_ref());
    let (mut moments, mut model) = match preset.map(String::as_str) {
        None => (None, None),
        Some("paper") => {
            let (m, u) = paper_preset();
            (Some(m), Some(u))
        }
        Some(other) => return Err(InputError(format!("unknown preset `{other}`"))),
    };
    if let Some(path) = source.model.as_ref().or(config.model.as_ref()) {
        let text = fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read model {}: {e}", path.display())))?;
        model = Some(model_from_json(&text)?);
    }
    if let Some(path) = source.moments.as_ref().or(config.moments.as_ref()) {
        let text = fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read moments {}: {e}", path.display())))?;
        moments = Some(moments_from_json(&text)?);
    }
    let model =
        model.ok_or_else(|| InputError("no model given; pass --preset paper or --model".into()))?;
    Ok((moments, model))
}

fn require_moments(moments: Option<MomentEstimates>) -> Result<MomentEstimates, InputError> {
    moments.ok_or_else(|| {
        InputError("no moments given; pass --preset paper or --moments".into())
    })
}

fn apply_model_overrides(
    model: UncertainReturnModel,
    tau: Option<f64>,
    beta: Option<f64>,
) -> Result<UncertainReturnModel, InputError> {
    let mut model = model;
    if let Some(t) = tau {
        if !t.is_finite() {
            return Err(InputError(format!("tau must be finite, got {t}")));
        }
        model = model.with_tau(t);
    }
    if let Some(b) = beta {
        model = UncertainReturnModel::new(
            model.mu0.clone(),
            model.shifts.clone(),
            model.family.clone(),
            b,
            model.tau,
        )?;
    }
    Ok(model)
}

fn parse_kind(
    flag: Option<&String>,
    config: &FileConfig,
) -> Result<FrontierKind, InputError> {
    let name = flag
        .or(config.kind.as_ref())
        .map(String::as_str)
        .unwrap_or("piecewise_linear");
    FrontierKind::parse(name).ok_or_else(|| {
        InputError(format!(
            "unknown kind `{name}`; expected nominal, piecewise_linear, bernstein, or piecewise_quadratic"
        ))
    })
}

/// Parses `start:end:step` into its three numbers. Step validity is the
/// sweep's concern; this only requires the syntax.
pub fn parse_tau_range(text: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("tau range `{text}` is not start:end:step"));
    }
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    match nums {
        Ok(v) if v.iter().all(|x| x.is_finite()) => Ok((v[0], v[1], v[2])),
        _ => Err(format!("tau range `{text}` has non-numeric parts")),
    }
}

fn write_out(path: &Path, payload: &str) -> Result<(), InputError> {
    fs::write(path, payload)
        .map_err(|e| InputError(format!("cannot write {}: {e}", path.display())))
}

fn cmd_estimate(args: &EstimateArgs) -> i32 {
    let run = || -> Result<String, InputError> {
        let file = fs::File::open(&args.prices)
            .map_err(|e| InputError(format!("cannot read {}: {e}", args.prices.display())))?;
        let prices = parse_prices_csv(file)?;
        let rule = match args.period {
            Period::Quarterly => SamplingRule::Quarterly,
            Period::EveryKth => SamplingRule::EveryKth(args.every),
        };
        let returns = compute_returns(&prices, rule)?;
        let moments = estimate_moments(&returns)?;
        Ok(moments_to_json(&moments))
    };
    match run() {
        Ok(json) => {
            println!("{json}");
            if let Some(path) = &args.out {
                if let Err(InputError(msg)) = write_out(path, &json) {
                    eprintln!("error: {msg}");
                    return EXIT_INPUT;
                }
            }
            EXIT_OK
        }
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    }
}

fn solution_exit_code(status: Status) -> i32 {
    match status {
        Status::Optimal => EXIT_OK,
        Status::Infeasible => EXIT_INFEASIBLE,
        Status::MaxIter => EXIT_MAX_ITER,
        Status::NonconvexRejected => EXIT_INPUT,
    }
}

fn emit_solution(solution: &Solution, out: Option<&Path>) -> Result<(), InputError> {
    let mut json = serde_json::to_string_pretty(solution).expect("solution serialize");
    json.push('\n');
    print!("{json}");
    if let Some(path) = out {
        write_out(path, &json)?;
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> i32 {
    let staged = || -> Result<Solution, InputError> {
        let config = load_config(args.source.config.as_deref())?;
        let (moments, model) = resolve_inputs(&args.source, &config)?;
        let moments = require_moments(moments)?;
        let model = apply_model_overrides(
            model,
            args.tau.or(config.tau),
            args.beta.or(config.beta),
        )?;
        let kind = parse_kind(args.kind.as_ref(), &config)?;
        let program = match frontier::build_program(kind, &model, &moments) {
            Ok(p) => p,
            Err(crate::approximation::ApproxError::NonConvexSurrogate { eig_min }) => {
                eprintln!(
                    "error: surrogate constraint is not convex (smallest eigenvalue {eig_min})"
                );
                return Ok(Solution::nonconvex_rejected());
            }
            Err(e) => return Err(e.into()),
        };
        Ok(solve(&program, &SolveOptions::default()))
    };
    match staged() {
        Ok(solution) => {
            if let Err(InputError(msg)) = emit_solution(&solution, args.out.as_deref()) {
                eprintln!("error: {msg}");
                return EXIT_INPUT;
            }
            solution_exit_code(solution.status)
        }
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    }
}

fn cmd_frontier(args: &FrontierArgs) -> i32 {
    let staged = || -> Result<(), InputError> {
        let config = load_config(args.source.config.as_deref())?;
        let (moments, model) = resolve_inputs(&args.source, &config)?;
        let moments = require_moments(moments)?;
        let model = apply_model_overrides(model, None, args.beta.or(config.beta))?;
        let kind = parse_kind(args.kind.as_ref(), &config)?;
        let range_text = args
            .tau_range
            .as_ref()
            .or(config.tau_range.as_ref())
            .map(String::as_str)
            .unwrap_or("1.5:3.5:0.2");
        let (start, end, step) = parse_tau_range(range_text)?;
        let table = frontier::sweep(&model, &moments, kind, start, end, step, &SolveOptions::default())?;
        let mut wrote = false;
        if let Some(path) = &args.out_csv {
            frontier::emit(&table, EmitFormat::Csv, path)?;
            wrote = true;
        }
        if let Some(path) = &args.out_json {
            frontier::emit(&table, EmitFormat::Json, path)?;
            wrote = true;
        }
        if let Some(path) = &args.out_svg {
            frontier::emit(&table, EmitFormat::Svg, path)?;
            wrote = true;
        }
        if !wrote {
            print!("{}", frontier::csv_string(&table));
        }
        Ok(())
    };
    match staged() {
        Ok(()) => EXIT_OK,
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    }
}

fn cmd_validate(args: &ValidateArgs) -> i32 {
    let staged = || -> Result<(), InputError> {
        let config = load_config(args.source.config.as_deref())?;
        let (_, model) = resolve_inputs(&args.source, &config)?;
        let model = apply_model_overrides(model, args.tau.or(config.tau), None)?;
        let text = fs::read_to_string(&args.solution)
            .map_err(|e| InputError(format!("cannot read {}: {e}", args.solution.display())))?;
        let solution: Solution = serde_json::from_str(&text)
            .map_err(|e| InputError(format!("solution {}: {e}", args.solution.display())))?;
        if !matches!(solution.status, Status::Optimal | Status::MaxIter) {
            return Err(InputError(format!(
                "solution status is `{}`; only solved portfolios can be validated",
                solution.status
            )));
        }
        let x = solution
            .x_vector()
            .ok_or_else(|| InputError("solution carries no weights to validate".into()))?;
        let count = args.count.or(config.count).unwrap_or(100_000);
        let seed = args.seed.or(config.seed).unwrap_or(42);
        let suite = default_suite(&model);
        let report = validate(&x, &model, &suite, count, seed)?;
        print!("{}", report_to_text(&report));
        if let Some(path) = &args.out {
            write_out(path, &report_to_json(&report))?;
        }
        Ok(())
    };
    match staged() {
        Ok(()) => EXIT_OK,
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    }
}

/// Runs the CLI on the given argument vector and returns the process exit
/// code. Kept separate from `main` so integration tests can drive it.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let _ = e.print();
            return code;
        }
    };
    match &cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Frontier(args) => cmd_frontier(args),
        Command::Validate(args) => cmd_validate(args),
    }
}
