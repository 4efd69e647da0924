//! `microsplit` command-line front end.
//!
//! Exit codes: 0 success, 1 property-check failure (`verify`), 2 usage or
//! feasibility error. When `--output` is given, a JSON manifest is written
//! next to the output file as `<output>.manifest.json`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::decomposition::{
    analyze, linspace, sweep, verify_improvement, ChainSpec, ComparisonResult, Scenario, SplitCase, SweepMode,
    SweepTable,
};
use crate::error::Error;
use crate::queueing::{sojourn, Discipline, Epsilon, Rate};
use crate::sim::{self, FeedMode, SimConfig, SimEstimate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "microsplit", version, about = "Queueing analysis of splitting a monolith into microservices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare a microservice chain against its monolith at one arrival rate.
    Analyze(AnalyzeArgs),
    /// Tabulate chain and monolith sojourn times over a grid of arrival rates.
    Sweep(SweepArgs),
    /// Estimate the chain's mean sojourn time by discrete-event simulation.
    Simulate(SimulateArgs),
    /// Check chain < monolith on random feasible scenarios for every case and discipline.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseArg {
    Worst,
    Best,
    /// User-supplied stage rates (simulate only).
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DisciplineArg {
    Mm1,
    Md1,
}

impl From<DisciplineArg> for Discipline {
    fn from(d: DisciplineArg) -> Self {
        match d {
            DisciplineArg::Mm1 => Discipline::ExponentialService,
            DisciplineArg::Md1 => Discipline::DeterministicService,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedArg {
    Independent,
    Tandem,
}

impl From<FeedArg> for FeedMode {
    fn from(f: FeedArg) -> Self {
        match f {
            FeedArg::Independent => FeedMode::IndependentStages,
            FeedArg::Tandem => FeedMode::Tandem,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Write to this file (plus a `.manifest.json` sidecar) instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScenarioArgs {
    #[arg(long, value_enum)]
    pub case: CaseArg,
    #[arg(long, value_enum)]
    pub discipline: DisciplineArg,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long)]
    pub mu: f64,
    /// Hot-stage headroom; required for, and only for, the worst case.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Skip infeasible grid points instead of failing.
    #[arg(long)]
    pub lenient: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub case: CaseArg,
    #[arg(long, value_enum)]
    pub discipline: DisciplineArg,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long)]
    pub lambda: f64,
    /// Required for worst and best cases.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Comma-separated stage rates for `--case custom`.
    #[arg(long, value_delimiter = ',')]
    pub stage_rates: Vec<f64>,
    /// Monolith rate for `--case custom`; derived from the stage rates when omitted.
    #[arg(long)]
    pub monolith_rate: Option<f64>,
    #[arg(long, value_enum, default_value_t = FeedArg::Independent)]
    pub feed: FeedArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 200_000)]
    pub jobs: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub warmup: f64,
    /// Write a per-job CSV trace of replication 0 to this path.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// Predicate applied to every draw of `verify`. Swappable for self-tests of
/// the harness.
pub type ImprovementCheck = fn(&ComparisonResult) -> bool;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    run_with_check(args, stdout, stderr, verify_improvement)
}

pub fn run_with_check<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write, check: ImprovementCheck) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let argv: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    let ctx = Context { argv: &argv, stdout, stderr };
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, ctx),
        Command::Sweep(a) => cmd_sweep(a, ctx),
        Command::Simulate(a) => cmd_simulate(a, ctx),
        Command::Verify(a) => cmd_verify(a, ctx, check),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            let _ = writeln!(stderr, "error: {}", failure.message);
            failure.code
        }
    }
}

struct Context<'a> {
    argv: &'a [String],
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Context<'_> {
    fn warn(&mut self, message: &str) {
        let _ = writeln!(self.stderr, "warning: {message}");
    }

    fn emit(&mut self, out: &OutputArgs, body: &[u8], parameters: Value, seed: Option<u64>) -> CmdResult {
        match &out.output {
            None => self.stdout.write_all(body)?,
            Some(path) => {
                fs::write(path, body)?;
                let manifest = RunManifest {
                    command_line: self.argv.to_vec(),
                    parameters,
                    tool_version: env!("CARGO_PKG_VERSION"),
                    seed,
                    timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                };
                let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::usage(e.to_string()))?;
                fs::write(manifest_path(path), text + "\n")?;
            }
        }
        Ok(())
    }
}

/// Everything needed to re-derive an output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub parameters: Value,
    pub tool_version: &'static str,
    pub seed: Option<u64>,
    pub timestamp: String,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn rate(flag: &str, value: f64) -> Result<Rate, Failure> {
    Rate::new(value).map_err(|_| Failure::usage(format!("--{flag} must be a finite positive number, got {value}")))
}

fn split_case(case: CaseArg, epsilon: Option<f64>) -> Result<SplitCase, Failure> {
    match (case, epsilon) {
        (CaseArg::Worst, Some(e)) => Ok(SplitCase::Worst {
            epsilon: Epsilon::new(e).map_err(|_| Failure::usage(format!("--epsilon must be positive, got {e}")))?,
        }),
        (CaseArg::Worst, None) => Err(Failure::usage("--case worst requires --epsilon")),
        (CaseArg::Best, None) => Ok(SplitCase::Best),
        (CaseArg::Best, Some(_)) => Err(Failure::usage("--epsilon applies only to --case worst")),
        (CaseArg::Custom, _) => Err(Failure::usage("--case custom is only supported by `simulate`")),
    }
}

fn scenario(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    Ok(Scenario {
        case: split_case(args.case, args.epsilon)?,
        n: args.n,
        mu: rate("mu", args.mu)?,
        discipline: args.discipline.into(),
    })
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_failure = |e: csv::Error| Failure::usage(e.to_string());
    w.write_record(header).map_err(to_failure)?;
    for row in rows {
        w.write_record(row).map_err(to_failure)?;
    }
    w.into_inner().map_err(|e| Failure::usage(e.to_string()))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::usage(e.to_string()))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn stage_headers(n: usize) -> impl Iterator<Item = String> {
    (1..=n).map(|i| format!("stage_{i}"))
}

fn epsilon_of(case: &SplitCase) -> Option<f64> {
    match case {
        SplitCase::Worst { epsilon } => Some(epsilon.get()),
        SplitCase::Best => None,
    }
}

fn cmd_analyze(args: &AnalyzeArgs, mut ctx: Context<'_>) -> CmdResult {
    let scenario = scenario(&args.scenario)?;
    let lambda = rate("lambda", args.lambda)?;
    let spec = scenario.build(lambda)?;
    let result = analyze(&spec)?;
    if result.near_saturation() {
        ctx.warn("a queue is above 99% utilization");
    }

    let epsilon = epsilon_of(&scenario.case);
    let body = match args.out.format {
        OutputFormat::Csv => {
            let header: Vec<String> = ["case", "discipline", "n", "lambda", "mu", "epsilon"]
                .into_iter()
                .map(String::from)
                .chain(stage_headers(spec.n()))
                .chain(["micro_total", "monolith", "absolute_improvement", "speedup"].map(String::from))
                .collect();
            let row: Vec<String> = [
                scenario.case.name().to_string(),
                scenario.discipline.to_string(),
                spec.n().to_string(),
                lambda.to_string(),
                scenario.mu.to_string(),
                epsilon.map(|e| e.to_string()).unwrap_or_default(),
            ]
            .into_iter()
            .chain(result.per_stage.iter().map(|s| s.sojourn_time.to_string()))
            .chain([
                result.micro_total_time.to_string(),
                result.monolith_time.to_string(),
                result.absolute_improvement.to_string(),
                result.speedup.to_string(),
            ])
            .collect();
            csv_bytes(&header, &[row])?
        }
        OutputFormat::Json => {
            let per_stage: Vec<Value> = result
                .per_stage
                .iter()
                .zip(spec.stage_rates())
                .enumerate()
                .map(|(i, (m, r))| {
                    json!({
                        "stage": i + 1,
                        "service_rate": r.get(),
                        "rho": m.rho,
                        "wait_time": m.wait_time,
                        "sojourn_time": m.sojourn_time,
                    })
                })
                .collect();
            json_bytes(&json!({
                "case": scenario.case.name(),
                "discipline": scenario.discipline.kendall(),
                "n": spec.n(),
                "lambda": lambda.get(),
                "mu": scenario.mu.get(),
                "epsilon": epsilon,
                "monolith_rate": spec.monolith_rate().get(),
                "per_stage": per_stage,
                "micro_total": result.micro_total_time,
                "monolith": result.monolith_time,
                "monolith_rho": result.monolith_rho,
                "absolute_improvement": result.absolute_improvement,
                "speedup": result.speedup,
            }))?
        }
    };
    ctx.emit(&args.out, &body, json!(args), None)
}

/// Grid for `sweep`: the default grid when no bounds are given, otherwise
/// missing bounds fall back to the default grid's bounds.
fn resolve_grid(args: &SweepArgs, scenario: &Scenario) -> Result<Vec<Rate>, Failure> {
    use crate::decomposition::{DEFAULT_GRID_HIGH, DEFAULT_GRID_LOW, DEFAULT_GRID_POINTS};
    if args.lambda_min.is_none() && args.lambda_max.is_none() && args.steps.is_none() {
        return Ok(scenario.default_grid()?);
    }
    let needs_lambda_max = args.lambda_min.is_none() || args.lambda_max.is_none();
    let lambda_max = if needs_lambda_max { scenario.lambda_max()? } else { f64::NAN };
    let min = args.lambda_min.unwrap_or(DEFAULT_GRID_LOW * lambda_max);
    let max = args.lambda_max.unwrap_or(DEFAULT_GRID_HIGH * lambda_max);
    let steps = args.steps.unwrap_or(DEFAULT_GRID_POINTS);
    Ok(linspace(min, max, steps)?)
}

pub fn sweep_csv_header(n: usize) -> Vec<String> {
    std::iter::once("lambda".to_string())
        .chain(stage_headers(n))
        .chain(["micro_total".to_string(), "monolith".to_string()])
        .collect()
}

fn sweep_csv(table: &SweepTable) -> Result<Vec<u8>, Failure> {
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|row| {
            std::iter::once(row.lambda.to_string())
                .chain(row.stage_times.iter().map(f64::to_string))
                .chain([row.micro_total.to_string(), row.monolith.to_string()])
                .collect()
        })
        .collect();
    csv_bytes(&sweep_csv_header(table.scenario.n), &rows)
}

fn cmd_sweep(args: &SweepArgs, mut ctx: Context<'_>) -> CmdResult {
    let scenario = scenario(&args.scenario)?;
    let grid = resolve_grid(args, &scenario)?;
    let mode = if args.lenient { SweepMode::Lenient } else { SweepMode::Strict };
    let table = sweep(&scenario, &grid, mode)?;
    if !table.skipped.is_empty() {
        ctx.warn(&format!("skipped {} infeasible grid point(s)", table.skipped.len()));
    }
    if table.rows.is_empty() {
        return Err(Failure::usage("no feasible grid points"));
    }
    let body = match args.out.format {
        OutputFormat::Csv => sweep_csv(&table)?,
        OutputFormat::Json => json_bytes(&json!({
            "case": scenario.case.name(),
            "discipline": scenario.discipline.kendall(),
            "n": scenario.n,
            "mu": scenario.mu.get(),
            "epsilon": epsilon_of(&scenario.case),
            "rows": table.rows.iter().map(|r| json!({
                "lambda": r.lambda,
                "stages": r.stage_times,
                "micro_total": r.micro_total,
                "monolith": r.monolith,
            })).collect::<Vec<_>>(),
            "skipped": table.skipped,
        }))?,
    };
    let mut parameters = json!(args);
    parameters["resolved_grid"] = json!({
        "lambda_min": grid.first().map(|r| r.get()),
        "lambda_max": grid.last().map(|r| r.get()),
        "steps": grid.len(),
    });
    ctx.emit(&args.out, &body, parameters, None)
}

fn simulate_spec(args: &SimulateArgs) -> Result<ChainSpec, Failure> {
    let lambda = rate("lambda", args.lambda)?;
    let discipline: Discipline = args.discipline.into();
    if args.case == CaseArg::Custom {
        if args.stage_rates.is_empty() {
            return Err(Failure::usage("--case custom requires --stage-rates"));
        }
        let stages = args
            .stage_rates
            .iter()
            .map(|&v| rate("stage-rates", v))
            .collect::<Result<Vec<_>, _>>()?;
        let monolith = args.monolith_rate.map(|v| rate("monolith-rate", v)).transpose()?;
        return Ok(ChainSpec::custom(discipline, lambda, stages, monolith)?);
    }
    if !args.stage_rates.is_empty() || args.monolith_rate.is_some() {
        return Err(Failure::usage("--stage-rates and --monolith-rate apply only to --case custom"));
    }
    let mu = args.mu.ok_or_else(|| Failure::usage("--mu is required"))?;
    let scenario = Scenario {
        case: split_case(args.case, args.epsilon)?,
        n: args.n,
        mu: rate("mu", mu)?,
        discipline,
    };
    Ok(scenario.build(lambda)?)
}

fn cmd_simulate(args: &SimulateArgs, mut ctx: Context<'_>) -> CmdResult {
    let spec = simulate_spec(args)?;
    if !spec.conserves_work() {
        ctx.warn("custom stage rates do not conserve the monolith's service time");
    }
    let config = SimConfig {
        seed: args.seed,
        jobs_per_replication: args.jobs,
        warmup_fraction: args.warmup,
        replications: args.reps,
        feed_mode: args.feed.into(),
    };
    let estimate = sim::simulate_chain(&spec, &config)?;
    let analytic = analyze(&spec)?;
    if let Some(path) = &args.trace {
        let file = fs::File::create(path)?;
        sim::write_trace(&spec, &config, 0, io::BufWriter::new(file))?;
    }
    let body = simulate_body(args.out.format, &spec, &config, &estimate, &analytic)?;
    ctx.emit(&args.out, &body, json!(args), Some(args.seed))
}

fn relative_error(simulated: f64, analytic: f64) -> f64 {
    (simulated - analytic) / analytic
}

fn simulate_body(
    format: OutputFormat,
    spec: &ChainSpec,
    config: &SimConfig,
    est: &SimEstimate,
    analytic: &ComparisonResult,
) -> Result<Vec<u8>, Failure> {
    let feed = match config.feed_mode {
        FeedMode::IndependentStages => "independent",
        FeedMode::Tandem => "tandem",
    };
    let rel = relative_error(est.mean_sojourn, analytic.micro_total_time);
    match format {
        OutputFormat::Csv => {
            let mut header: Vec<String> = [
                "feed",
                "seed",
                "jobs",
                "reps",
                "warmup",
                "samples",
                "mean_sojourn",
                "std_error",
                "ci95_half_width",
                "analytic_total",
                "relative_error",
                "monolith_analytic",
            ]
            .map(String::from)
            .to_vec();
            let mut row = vec![
                feed.to_string(),
                config.seed.to_string(),
                config.jobs_per_replication.to_string(),
                config.replications.to_string(),
                config.warmup_fraction.to_string(),
                est.samples.to_string(),
                est.mean_sojourn.to_string(),
                est.std_error.to_string(),
                est.ci95_half_width.to_string(),
                analytic.micro_total_time.to_string(),
                rel.to_string(),
                analytic.monolith_time.to_string(),
            ];
            for (i, (sim, an)) in est.per_stage_means.iter().zip(&analytic.per_stage).enumerate() {
                header.push(format!("stage_{}_sim", i + 1));
                header.push(format!("stage_{}_analytic", i + 1));
                row.push(sim.to_string());
                row.push(an.sojourn_time.to_string());
            }
            csv_bytes(&header, &[row])
        }
        OutputFormat::Json => {
            let stages: Vec<Value> = est
                .per_stage_means
                .iter()
                .zip(&analytic.per_stage)
                .zip(spec.stage_rates())
                .enumerate()
                .map(|(i, ((sim, an), r))| {
                    json!({
                        "stage": i + 1,
                        "service_rate": r.get(),
                        "simulated": sim,
                        "analytic": an.sojourn_time,
                        "relative_error": relative_error(*sim, an.sojourn_time),
                    })
                })
                .collect();
            json_bytes(&json!({
                "discipline": spec.discipline().kendall(),
                "lambda": spec.lambda().get(),
                "feed": feed,
                "seed": config.seed,
                "jobs": config.jobs_per_replication,
                "reps": config.replications,
                "warmup": config.warmup_fraction,
                "samples": est.samples,
                "mean_sojourn": est.mean_sojourn,
                "std_error": est.std_error,
                "ci95_half_width": est.ci95_half_width,
                "analytic_total": analytic.micro_total_time,
                "relative_error": rel,
                "monolith_analytic": analytic.monolith_time,
                "per_stage": stages,
                "replication_means": est.replication_means,
            }))
        }
    }
}

/// One random scenario drawn by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Draw {
    pub case: &'static str,
    pub discipline: &'static str,
    pub n: usize,
    pub lambda: f64,
    pub mu: f64,
    pub epsilon: Option<f64>,
    /// Arrival rate relative to the largest stable one.
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub case: &'static str,
    pub discipline: &'static str,
    pub trials: usize,
    pub passed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub draw: Draw,
    pub micro_total: Option<f64>,
    pub monolith: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub cells: Vec<CellReport>,
    pub first_counterexample: Option<Counterexample>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.cells.iter().all(|c| c.passed == c.trials)
    }
}

pub const VERIFY_LOAD_RANGE: (f64, f64) = (0.05, 0.95);
pub const VERIFY_N_RANGE: (usize, usize) = (2, 16);
pub const VERIFY_LOG10_EPSILON_RANGE: (f64, f64) = (-3.0, 2.0);
pub const VERIFY_LOG10_MU_RANGE: (f64, f64) = (-2.0, 2.0);

fn draw_scenario(rng: &mut ChaCha8Rng, worst: bool, discipline: Discipline) -> Result<(Scenario, Draw), Error> {
    let n = rng.random_range(VERIFY_N_RANGE.0..=VERIFY_N_RANGE.1);
    let mu = Rate::new(10f64.powf(rng.random_range(VERIFY_LOG10_MU_RANGE.0..VERIFY_LOG10_MU_RANGE.1)))?;
    let case = if worst {
        let e = 10f64.powf(rng.random_range(VERIFY_LOG10_EPSILON_RANGE.0..VERIFY_LOG10_EPSILON_RANGE.1));
        SplitCase::Worst { epsilon: Epsilon::new(e)? }
    } else {
        SplitCase::Best
    };
    let load = rng.random_range(VERIFY_LOAD_RANGE.0..VERIFY_LOAD_RANGE.1);
    let scenario = Scenario { case, n, mu, discipline };
    let lambda = load * scenario.lambda_max()?;
    let draw = Draw {
        case: case.name(),
        discipline: discipline.kendall(),
        n,
        lambda,
        mu: mu.get(),
        epsilon: epsilon_of(&case),
        load,
    };
    Ok((scenario, draw))
}

/// Draws `trials` feasible scenarios per case and discipline and applies
/// `check` to each analysed result. Each cell uses its own ChaCha8 stream.
pub fn run_verification(trials: usize, seed: u64, check: ImprovementCheck) -> VerifyReport {
    let mut cells = Vec::new();
    let mut first_counterexample = None;
    let mut stream = 0u64;
    for worst in [true, false] {
        for discipline in Discipline::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            stream += 1;
            let mut passed = 0;
            let case_name = if worst { "worst" } else { "best" };
            for _ in 0..trials {
                let outcome = draw_scenario(&mut rng, worst, discipline).and_then(|(scenario, draw)| {
                    let result = Rate::new(draw.lambda).and_then(|l| scenario.build(l)).and_then(|s| analyze(&s));
                    Ok((draw, result))
                });
                let failure = match outcome {
                    Ok((_, Ok(result))) if check(&result) => None,
                    Ok((draw, Ok(result))) => Some(Counterexample {
                        draw,
                        micro_total: Some(result.micro_total_time),
                        monolith: Some(result.monolith_time),
                        error: None,
                    }),
                    Ok((draw, Err(e))) => Some(Counterexample {
                        draw,
                        micro_total: None,
                        monolith: None,
                        error: Some(e.to_string()),
                    }),
                    Err(e) => Some(Counterexample {
                        draw: Draw {
                            case: case_name,
                            discipline: discipline.kendall(),
                            n: 0,
                            lambda: f64::NAN,
                            mu: f64::NAN,
                            epsilon: None,
                            load: f64::NAN,
                        },
                        micro_total: None,
                        monolith: None,
                        error: Some(e.to_string()),
                    }),
                };
                match failure {
                    None => passed += 1,
                    Some(cx) => {
                        if first_counterexample.is_none() {
                            first_counterexample = Some(cx);
                        }
                    }
                }
            }
            cells.push(CellReport { case: case_name, discipline: discipline.kendall(), trials, passed });
        }
    }
    VerifyReport { seed, cells, first_counterexample }
}

fn describe_counterexample(cx: &Counterexample) -> String {
    let d = &cx.draw;
    let mut s = format!(
        "counterexample: case={} discipline={} n={} lambda={:?} mu={:?} epsilon={} load={:?}",
        d.case,
        d.discipline,
        d.n,
        d.lambda,
        d.mu,
        d.epsilon.map(|e| format!("{e:?}")).unwrap_or_else(|| "none".into()),
        d.load,
    );
    if let (Some(micro), Some(mono)) = (cx.micro_total, cx.monolith) {
        s.push_str(&format!(" micro_total={micro:?} monolith={mono:?}"));
    }
    if let Some(e) = &cx.error {
        s.push_str(&format!(" error={e}"));
    }
    s
}

fn cmd_verify(args: &VerifyArgs, mut ctx: Context<'_>, check: ImprovementCheck) -> CmdResult {
    if args.trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    let report = run_verification(args.trials, args.seed, check);
    let body = match args.out.format {
        OutputFormat::Csv => {
            let header = ["case", "discipline", "trials", "passed"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = report
                .cells
                .iter()
                .map(|c| vec![c.case.into(), c.discipline.into(), c.trials.to_string(), c.passed.to_string()])
                .collect();
            csv_bytes(&header, &rows)?
        }
        OutputFormat::Json => json_bytes(&report)?,
    };
    ctx.emit(&args.out, &body, json!(args), Some(args.seed))?;
    match &report.first_counterexample {
        None => Ok(()),
        Some(cx) => Err(Failure { code: EXIT_CHECK_FAILED, message: describe_counterexample(cx) }),
    }
}

/// Recomputes one sweep row from its arrival rate; used to check CSV output.
pub fn recompute_sweep_row(scenario: &Scenario, lambda: f64) -> Result<Vec<f64>, Error> {
    let spec = scenario.build(Rate::new(lambda)?)?;
    let mut row = vec![lambda];
    let mut total = 0.0;
    for &r in spec.stage_rates() {
        let t = sojourn(spec.discipline(), spec.lambda(), r)?.sojourn_time;
        total += t;
        row.push(t);
    }
    row.push(total);
    row.push(sojourn(spec.discipline(), spec.lambda(), spec.monolith_rate())?.sojourn_time);
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("microsplit").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn epsilon_required_iff_worst() {
        let (code, _, err) = run_capture(&["analyze", "--case", "worst", "--discipline", "mm1", "--lambda", "1", "--mu", "18"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("requires --epsilon"));
        let (code, _, _) = run_capture(&[
            "analyze", "--case", "best", "--discipline", "mm1", "--lambda", "1", "--mu", "2.5", "--epsilon", "1",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn n_out_of_range() {
        let (code, _, err) = run_capture(&[
            "analyze", "--case", "worst", "--discipline", "mm1", "--n", "1", "--lambda", "1", "--mu", "18", "--epsilon", "2",
        ]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("n=1"), "{err}");
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, _) = run_capture(&["analyze", "-l", "1"]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn verify_counts_cells() {
        let report = run_verification(50, 3, verify_improvement);
        assert_eq!(report.cells.len(), 4);
        assert!(report.all_passed());
        assert!(report.first_counterexample.is_none());
    }

    #[test]
    fn verify_draws_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let (scenario, draw) = draw_scenario(&mut rng, true, Discipline::DeterministicService).unwrap();
            assert!((2..=16).contains(&draw.n));
            let e = draw.epsilon.unwrap();
            assert!((1e-3..=1e2).contains(&e));
            assert!(draw.load > 0.05 && draw.load < 0.95);
            assert!(scenario.is_feasible(draw.lambda));
        }
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path(Path::new("out/a.csv")), PathBuf::from("out/a.csv.manifest.json"));
    }
}
