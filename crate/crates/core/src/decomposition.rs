//! Monolith-versus-chain comparison for worst-case and best-case splits.
//!
//! A monolith with mean service time `1/m` is split into `n` microservices
//! traversed in sequence. The split conserves pure service work:
//! `sum(1/rate_i) == 1/m`. Two splits are modelled:
//!
//! * **worst case**: one hot stage at rate `lambda + epsilon` barely above the
//!   arrival rate, with the remaining work spread over `n - 1` stages at rate
//!   `(n - 1) * mu`. The equivalent monolith rate is
//!   `mu (lambda + epsilon) / (mu + lambda + epsilon)`.
//! * **best case**: the work is split evenly, `n` stages at rate `n * mu`
//!   against a monolith at rate `mu`.
//!
//! Each stage is analysed as an independent queue fed by Poisson(lambda).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, QueueLocation, Result};
use crate::queueing::{sojourn_at, Discipline, Epsilon, Rate, StageMetrics};

/// Upper bound on the number of stages in a chain.
pub const MAX_STAGES: usize = 10_000;

pub const DEFAULT_GRID_POINTS: usize = 64;
pub const DEFAULT_GRID_LOW: f64 = 0.02;
pub const DEFAULT_GRID_HIGH: f64 = 0.95;

/// Relative tolerance of the work-conservation check on chain specs.
pub const CONSERVATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum SplitCase {
    Worst { epsilon: Epsilon },
    Best,
}

impl SplitCase {
    pub fn name(&self) -> &'static str {
        match self {
            SplitCase::Worst { .. } => "worst",
            SplitCase::Best => "best",
        }
    }

    pub fn min_stages(&self) -> usize {
        match self {
            SplitCase::Worst { .. } => 2,
            SplitCase::Best => 1,
        }
    }
}

/// How a [`ChainSpec`] was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum CaseLabel {
    Worst { epsilon: Epsilon },
    Best,
    Custom,
}

impl From<SplitCase> for CaseLabel {
    fn from(case: SplitCase) -> Self {
        match case {
            SplitCase::Worst { epsilon } => CaseLabel::Worst { epsilon },
            SplitCase::Best => CaseLabel::Best,
        }
    }
}

/// A decomposition scenario at one arrival rate.
///
/// Constructed only through [`build_worst_case`], [`build_best_case`] or
/// [`ChainSpec::custom`], all of which check that every queue is stable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSpec {
    discipline: Discipline,
    lambda: Rate,
    stage_rates: Vec<Rate>,
    monolith_rate: Rate,
    case_label: CaseLabel,
}

impl ChainSpec {
    /// A user-defined split. When `monolith_rate` is `None` it is derived from
    /// work conservation, `1 / sum(1/rate_i)`.
    pub fn custom(
        discipline: Discipline,
        lambda: Rate,
        stage_rates: Vec<Rate>,
        monolith_rate: Option<Rate>,
    ) -> Result<Self> {
        check_n(stage_rates.len(), 1)?;
        let monolith_rate = match monolith_rate {
            Some(rate) => rate,
            None => Rate::new(1.0 / service_time_sum(&stage_rates))?,
        };
        let spec = ChainSpec {
            discipline,
            lambda,
            stage_rates,
            monolith_rate,
            case_label: CaseLabel::Custom,
        };
        spec.check_stable()?;
        Ok(spec)
    }

    pub fn discipline(&self) -> Discipline {
        self.discipline
    }

    pub fn lambda(&self) -> Rate {
        self.lambda
    }

    pub fn stage_rates(&self) -> &[Rate] {
        &self.stage_rates
    }

    pub fn monolith_rate(&self) -> Rate {
        self.monolith_rate
    }

    pub fn case_label(&self) -> CaseLabel {
        self.case_label
    }

    pub fn n(&self) -> usize {
        self.stage_rates.len()
    }

    /// Whether the stages' mean service times add up to the monolith's.
    /// Always true for worst/best splits; custom splits may violate it.
    pub fn conserves_work(&self) -> bool {
        let split = service_time_sum(&self.stage_rates);
        let whole = self.monolith_rate.mean_interval();
        (split - whole).abs() <= CONSERVATION_TOL * whole
    }

    fn check_stable(&self) -> Result<()> {
        let lambda = self.lambda.get();
        for (i, rate) in self.stage_rates.iter().enumerate() {
            if lambda >= rate.get() {
                return Err(Error::UnstableQueue {
                    location: QueueLocation::Stage(i),
                    lambda,
                    mu: rate.get(),
                });
            }
        }
        if lambda >= self.monolith_rate.get() {
            return Err(Error::UnstableQueue {
                location: QueueLocation::Monolith,
                lambda,
                mu: self.monolith_rate.get(),
            });
        }
        Ok(())
    }
}

fn service_time_sum(rates: &[Rate]) -> f64 {
    rates.iter().map(|r| r.mean_interval()).sum()
}

fn check_n(n: usize, min: usize) -> Result<()> {
    if (min..=MAX_STAGES).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidN { n, min, max: MAX_STAGES })
    }
}

/// Service rate of the unsplit service in the worst case:
/// `mu (lambda + epsilon) / (mu + lambda + epsilon)`.
///
/// Fails with [`Error::UnstableMonolith`] when that rate does not exceed
/// `lambda`, i.e. when `lambda^2 + lambda*epsilon - mu*epsilon >= 0`.
pub fn worst_case_monolith_rate(lambda: Rate, epsilon: Epsilon, mu: Rate) -> Result<Rate> {
    let (l, e, m) = (lambda.get(), epsilon.get(), mu.get());
    let hot = l + e;
    let rate = m * hot / (m + hot);
    if rate > l {
        Rate::new(rate)
    } else {
        Err(Error::UnstableMonolith {
            lambda: l,
            epsilon: e,
            mu: m,
            monolith_rate: rate,
        })
    }
}

pub fn build_worst_case(
    n: usize,
    lambda: Rate,
    mu: Rate,
    epsilon: Epsilon,
    discipline: Discipline,
) -> Result<ChainSpec> {
    check_n(n, 2)?;
    let monolith_rate = worst_case_monolith_rate(lambda, epsilon, mu)?;
    let hot = Rate::new(lambda.get() + epsilon.get())?;
    let cold = Rate::new((n - 1) as f64 * mu.get())?;
    let mut stage_rates = Vec::with_capacity(n);
    stage_rates.push(hot);
    stage_rates.resize(n, cold);
    let spec = ChainSpec {
        discipline,
        lambda,
        stage_rates,
        monolith_rate,
        case_label: CaseLabel::Worst { epsilon },
    };
    spec.check_stable()?;
    Ok(spec)
}

pub fn build_best_case(n: usize, lambda: Rate, mu: Rate, discipline: Discipline) -> Result<ChainSpec> {
    check_n(n, 1)?;
    let stage = Rate::new(n as f64 * mu.get())?;
    let spec = ChainSpec {
        discipline,
        lambda,
        stage_rates: vec![stage; n],
        monolith_rate: mu,
        case_label: CaseLabel::Best,
    };
    spec.check_stable()?;
    Ok(spec)
}

/// Analytical comparison of a chain against its monolith.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub per_stage: Vec<StageMetrics>,
    pub micro_total_time: f64,
    pub monolith_time: f64,
    pub monolith_rho: f64,
    /// `monolith_time - micro_total_time`
    pub absolute_improvement: f64,
    /// `monolith_time / micro_total_time`
    pub speedup: f64,
}

impl ComparisonResult {
    pub fn near_saturation(&self) -> bool {
        self.monolith_rho > crate::queueing::SATURATION_WARNING_RHO
            || self.per_stage.iter().any(StageMetrics::is_near_saturation)
    }
}

pub fn analyze(spec: &ChainSpec) -> Result<ComparisonResult> {
    let per_stage = spec
        .stage_rates
        .iter()
        .enumerate()
        .map(|(i, &rate)| sojourn_at(spec.discipline, spec.lambda, rate, QueueLocation::Stage(i)))
        .collect::<Result<Vec<_>>>()?;
    let monolith = sojourn_at(spec.discipline, spec.lambda, spec.monolith_rate, QueueLocation::Monolith)?;
    let micro_total_time: f64 = per_stage.iter().map(|s| s.sojourn_time).sum();
    let monolith_time = monolith.sojourn_time;
    Ok(ComparisonResult {
        per_stage,
        micro_total_time,
        monolith_time,
        monolith_rho: monolith.rho,
        absolute_improvement: monolith_time - micro_total_time,
        speedup: monolith_time / micro_total_time,
    })
}

/// True iff the chain is strictly faster than the monolith. No tolerance:
/// an identity split (`n == 1`) returns false.
pub fn verify_improvement(result: &ComparisonResult) -> bool {
    result.micro_total_time < result.monolith_time
}

/// A split case with everything fixed except the arrival rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub case: SplitCase,
    pub n: usize,
    pub mu: Rate,
    pub discipline: Discipline,
}

impl Scenario {
    pub fn build(&self, lambda: Rate) -> Result<ChainSpec> {
        match self.case {
            SplitCase::Worst { epsilon } => build_worst_case(self.n, lambda, self.mu, epsilon, self.discipline),
            SplitCase::Best => build_best_case(self.n, lambda, self.mu, self.discipline),
        }
    }

    pub fn is_feasible(&self, lambda: f64) -> bool {
        Rate::new(lambda).and_then(|l| self.build(l)).is_ok()
    }

    /// Supremum of the arrival rates at which every queue is stable, found by
    /// bisection on [`Scenario::is_feasible`] over `(0, mu]`.
    pub fn lambda_max(&self) -> Result<f64> {
        check_n(self.n, self.case.min_stages())?;
        let mut hi = self.mu.get();
        let mut lo = 0.0;
        for _ in 0..2048 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.is_feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo > 0.0 {
            Ok(lo)
        } else {
            Err(Error::InvalidGrid(format!("no feasible arrival rate below mu={}", self.mu)))
        }
    }

    /// `DEFAULT_GRID_POINTS` evenly spaced arrival rates from
    /// `DEFAULT_GRID_LOW * lambda_max` to `DEFAULT_GRID_HIGH * lambda_max`.
    pub fn default_grid(&self) -> Result<Vec<Rate>> {
        let lambda_max = self.lambda_max()?;
        linspace(
            DEFAULT_GRID_LOW * lambda_max,
            DEFAULT_GRID_HIGH * lambda_max,
            DEFAULT_GRID_POINTS,
        )
    }
}

/// Inclusive evenly spaced grid. `steps == 1` yields just `min`.
pub fn linspace(min: f64, max: f64, steps: usize) -> Result<Vec<Rate>> {
    match steps {
        0 => Err(Error::InvalidGrid("steps must be at least 1".into())),
        1 => Ok(vec![Rate::new(min)?]),
        _ if !(min < max) => Err(Error::InvalidGrid(format!(
            "lambda-min {min} must be below lambda-max {max}"
        ))),
        _ => {
            let span = max - min;
            let last = (steps - 1) as f64;
            (0..steps)
                .map(|i| {
                    let v = if i == steps - 1 { max } else { min + span * (i as f64 / last) };
                    Rate::new(v)
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMode {
    /// Abort on any infeasible grid point.
    #[default]
    Strict,
    /// Skip infeasible points and record them in [`SweepTable::skipped`].
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub stage_times: Vec<f64>,
    pub micro_total: f64,
    pub monolith: f64,
}

impl SweepRow {
    pub fn absolute_improvement(&self) -> f64 {
        self.monolith - self.micro_total
    }

    pub fn speedup(&self) -> f64 {
        self.monolith / self.micro_total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub scenario: Scenario,
    pub rows: Vec<SweepRow>,
    /// Grid points dropped in lenient mode.
    pub skipped: Vec<f64>,
}

/// Evaluates the scenario at every grid point. The grid must be strictly
/// increasing. Rows are computed in parallel and assembled in grid order.
pub fn sweep(scenario: &Scenario, grid: &[Rate], mode: SweepMode) -> Result<SweepTable> {
    check_n(scenario.n, scenario.case.min_stages())?;
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty lambda grid".into()));
    }
    if grid.windows(2).any(|w| w[0].get() >= w[1].get()) {
        return Err(Error::InvalidGrid("lambda grid must be strictly increasing".into()));
    }

    let evaluated: Vec<Result<SweepRow>> = grid
        .par_iter()
        .map(|&lambda| {
            let spec = scenario.build(lambda)?;
            let result = analyze(&spec)?;
            Ok(SweepRow {
                lambda: lambda.get(),
                stage_times: result.per_stage.iter().map(|s| s.sojourn_time).collect(),
                micro_total: result.micro_total_time,
                monolith: result.monolith_time,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(grid.len());
    let mut skipped = Vec::new();
    for (lambda, row) in grid.iter().zip(evaluated) {
        match row {
            Ok(row) => rows.push(row),
            Err(Error::UnstableQueue { .. } | Error::UnstableMonolith { .. }) => skipped.push(lambda.get()),
            Err(other) => return Err(other),
        }
    }
    if mode == SweepMode::Strict && !skipped.is_empty() {
        return Err(Error::InfeasibleGridPoint { points: skipped });
    }
    Ok(SweepTable {
        scenario: *scenario,
        rows,
        skipped,
    })
}
