//! Discrete-event simulation oracle for the closed forms.
//!
//! Every replication runs sequentially on its own random substreams
//! (see [`rng`]). Replications run in parallel; results are gathered in
//! replication order and reduced sequentially, so an estimate is
//! bit-identical for a given seed and config regardless of thread count.

mod engine;
pub mod rng;

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use engine::TraceRecord;
use engine::{ChainRun, ReplicationStats};

use crate::decomposition::ChainSpec;
use crate::error::{Error, QueueLocation, Result};
use crate::queueing::{Discipline, Rate};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;
/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedMode {
    /// Each stage is its own queue with a fresh Poisson(lambda) stream; the
    /// chain total is the sum of per-stage means.
    IndependentStages,
    /// One Poisson stream enters stage 1; departures feed the next stage.
    Tandem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Jobs completed per replication, warmup included.
    pub jobs_per_replication: usize,
    /// Leading fraction of completed jobs discarded, in `[0, 0.5]`.
    pub warmup_fraction: f64,
    pub replications: usize,
    pub feed_mode: FeedMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            jobs_per_replication: 200_000,
            warmup_fraction: 0.1,
            replications: 10,
            feed_mode: FeedMode::IndependentStages,
        }
    }
}

impl SimConfig {
    pub fn warmup_jobs(&self) -> usize {
        (self.warmup_fraction * self.jobs_per_replication as f64).floor() as usize
    }

    pub fn retained_jobs(&self) -> usize {
        self.jobs_per_replication - self.warmup_jobs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs_per_replication == 0 {
            return Err(Error::InvalidConfig("jobs per replication must be positive".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        if self.replications > u32::MAX as usize {
            return Err(Error::InvalidConfig("too many replications".into()));
        }
        if !(0.0..=0.5).contains(&self.warmup_fraction) {
            return Err(Error::InvalidConfig(format!(
                "warmup fraction {} outside [0, 0.5]",
                self.warmup_fraction
            )));
        }
        if self.retained_jobs() == 0 {
            return Err(Error::InvalidConfig("no jobs left after warmup".into()));
        }
        Ok(())
    }
}

/// Mean sojourn with a confidence interval formed across replication means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean_sojourn: f64,
    /// Standard error of the mean across replications; zero with a single replication.
    pub std_error: f64,
    /// `Z_95 * std_error`.
    pub ci95_half_width: f64,
    /// Replications times retained jobs per replication.
    pub samples: usize,
    pub replications: usize,
    /// Per-stage mean sojourn; a single entry for a lone queue.
    pub per_stage_means: Vec<f64>,
    pub replication_means: Vec<f64>,
}

impl SimEstimate {
    pub fn ci_half_width(&self, z: f64) -> f64 {
        z * self.std_error
    }

    /// Whether `value` lies inside the `z`-quantile interval around the mean.
    pub fn covers(&self, value: f64, z: f64) -> bool {
        (self.mean_sojourn - value).abs() <= self.ci_half_width(z)
    }

    fn from_replications(reps: &[ReplicationStats]) -> Self {
        let count = reps.len();
        let k = count as f64;
        let replication_means: Vec<f64> = reps.iter().map(|r| r.mean_total).collect();
        let mean = replication_means.iter().sum::<f64>() / k;
        let std_error = if count > 1 {
            let var = replication_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        let stages = reps[0].stage_means.len();
        let per_stage_means = (0..stages)
            .map(|s| reps.iter().map(|r| r.stage_means[s]).sum::<f64>() / k)
            .collect();
        SimEstimate {
            mean_sojourn: mean,
            std_error,
            ci95_half_width: Z_95 * std_error,
            samples: reps.iter().map(|r| r.retained).sum(),
            replications: count,
            per_stage_means,
            replication_means,
        }
    }
}

fn check_stable(lambda: Rate, mu: Rate, location: QueueLocation) -> Result<()> {
    if lambda.get() < mu.get() {
        Ok(())
    } else {
        Err(Error::UnstableQueue { location, lambda: lambda.get(), mu: mu.get() })
    }
}

/// Simulates one FIFO queue. The feed mode is irrelevant here.
pub fn simulate_single_queue(lambda: Rate, mu: Rate, discipline: Discipline, config: &SimConfig) -> Result<SimEstimate> {
    check_stable(lambda, mu, QueueLocation::Single)?;
    config.validate()?;
    let rates = [mu];
    let reps: Vec<ReplicationStats> = (0..config.replications)
        .into_par_iter()
        .map(|rep| stage_run(lambda, &rates, discipline, config, rep, 0).run(None))
        .collect();
    Ok(SimEstimate::from_replications(&reps))
}

/// Simulates the microservice side of a chain spec (the monolith is not simulated).
pub fn simulate_chain(spec: &ChainSpec, config: &SimConfig) -> Result<SimEstimate> {
    let lambda = spec.lambda();
    for (i, &rate) in spec.stage_rates().iter().enumerate() {
        check_stable(lambda, rate, QueueLocation::Stage(i))?;
    }
    config.validate()?;
    let rates = spec.stage_rates();
    let discipline = spec.discipline();
    let reps: Vec<ReplicationStats> = (0..config.replications)
        .into_par_iter()
        .map(|rep| match config.feed_mode {
            FeedMode::Tandem => stage_run(lambda, rates, discipline, config, rep, 0).run(None),
            FeedMode::IndependentStages => {
                let per_stage: Vec<ReplicationStats> = rates
                    .iter()
                    .enumerate()
                    .map(|(i, rate)| stage_run(lambda, std::slice::from_ref(rate), discipline, config, rep, i).run(None))
                    .collect();
                ReplicationStats {
                    mean_total: per_stage.iter().map(|s| s.mean_total).sum(),
                    stage_means: per_stage.iter().map(|s| s.mean_total).collect(),
                    retained: config.retained_jobs(),
                }
            }
        })
        .collect();
    Ok(SimEstimate::from_replications(&reps))
}

fn stage_run<'a>(
    lambda: Rate,
    rates: &'a [Rate],
    discipline: Discipline,
    config: &SimConfig,
    replication: usize,
    stage_offset: usize,
) -> ChainRun<'a> {
    ChainRun {
        lambda,
        rates,
        discipline,
        seed: config.seed,
        replication: replication as u32,
        stream_stage_offset: stage_offset as u32,
        jobs: config.jobs_per_replication,
        warmup: config.warmup_jobs(),
    }
}

/// Re-runs one replication of `simulate_chain` and writes every stage visit
/// as CSV: `job_id,stage,arrival,service_start,departure`. Stages are
/// numbered from 1. In independent-stages mode job ids restart per stage.
pub fn write_trace<W: io::Write>(spec: &ChainSpec, config: &SimConfig, replication: usize, out: W) -> Result<()> {
    config.validate()?;
    if replication >= config.replications {
        return Err(Error::InvalidConfig(format!(
            "replication {replication} out of range (0..{})",
            config.replications
        )));
    }
    let lambda = spec.lambda();
    let rates = spec.stage_rates();
    let mut records = Vec::new();
    match config.feed_mode {
        FeedMode::Tandem => {
            let mut sink = |rec: TraceRecord| records.push(rec);
            stage_run(lambda, rates, spec.discipline(), config, replication, 0).run(Some(&mut sink));
        }
        FeedMode::IndependentStages => {
            for (i, rate) in rates.iter().enumerate() {
                let mut sink = |rec: TraceRecord| records.push(TraceRecord { stage: i, ..rec });
                stage_run(lambda, std::slice::from_ref(rate), spec.discipline(), config, replication, i)
                    .run(Some(&mut sink));
            }
        }
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["job_id", "stage", "arrival", "service_start", "departure"])?;
    for rec in records {
        writer.write_record([
            rec.job_id.to_string(),
            (rec.stage + 1).to_string(),
            rec.arrival.to_string(),
            rec.service_start.to_string(),
            rec.departure.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::build_best_case;

    fn r(v: f64) -> Rate {
        Rate::new(v).unwrap()
    }

    fn small(feed_mode: FeedMode) -> SimConfig {
        SimConfig { seed: 5, jobs_per_replication: 20_000, warmup_fraction: 0.1, replications: 4, feed_mode }
    }

    #[test]
    fn rejects_unstable_and_bad_config() {
        let cfg = small(FeedMode::Tandem);
        assert!(matches!(
            simulate_single_queue(r(2.0), r(2.0), Discipline::ExponentialService, &cfg),
            Err(Error::UnstableQueue { location: QueueLocation::Single, .. })
        ));
        for bad in [
            SimConfig { jobs_per_replication: 0, ..cfg },
            SimConfig { replications: 0, ..cfg },
            SimConfig { warmup_fraction: 0.6, ..cfg },
            SimConfig { warmup_fraction: -0.1, ..cfg },
        ] {
            assert!(matches!(
                simulate_single_queue(r(1.0), r(2.0), Discipline::ExponentialService, &bad),
                Err(Error::InvalidConfig(_))
            ));
        }
        // one job with half warmup keeps it: floor(0.5) = 0
        let one = SimConfig { jobs_per_replication: 2, warmup_fraction: 0.5, ..cfg };
        assert_eq!(one.retained_jobs(), 1);
    }

    #[test]
    fn sample_accounting() {
        let cfg = small(FeedMode::IndependentStages);
        let spec = build_best_case(3, r(1.0), r(2.5), Discipline::DeterministicService).unwrap();
        let est = simulate_chain(&spec, &cfg).unwrap();
        assert_eq!(est.samples, 4 * 18_000);
        assert_eq!(est.per_stage_means.len(), 3);
        assert_eq!(est.replication_means.len(), 4);
        assert!((est.ci95_half_width - 1.96 * est.std_error).abs() <= 1e-15);
        let stage_sum: f64 = est.per_stage_means.iter().sum();
        assert!((stage_sum - est.mean_sojourn).abs() < 1e-12);
    }

    #[test]
    fn single_queue_equals_one_stage_chain() {
        let cfg = small(FeedMode::Tandem);
        let single = simulate_single_queue(r(1.0), r(2.5), Discipline::ExponentialService, &cfg).unwrap();
        let spec = build_best_case(1, r(1.0), r(2.5), Discipline::ExponentialService).unwrap();
        assert_eq!(simulate_chain(&spec, &cfg).unwrap(), single);
        let indep = SimConfig { feed_mode: FeedMode::IndependentStages, ..cfg };
        assert_eq!(simulate_chain(&spec, &indep).unwrap(), single);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let spec = build_best_case(2, r(1.0), r(2.5), Discipline::ExponentialService).unwrap();
        let cfg = small(FeedMode::Tandem);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_chain(&spec, &cfg).unwrap());
        let b = four.install(|| simulate_chain(&spec, &cfg).unwrap());
        assert_eq!(a, b);
        let c = simulate_chain(&spec, &SimConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trace_csv_schema() {
        let spec = build_best_case(2, r(1.0), r(2.5), Discipline::DeterministicService).unwrap();
        let cfg = SimConfig { jobs_per_replication: 50, ..small(FeedMode::Tandem) };
        let mut buf = Vec::new();
        write_trace(&spec, &cfg, 0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("job_id,stage,arrival,service_start,departure"));
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 100);
        for row in &rows {
            assert!(row[2] <= row[3] && (row[4] - row[3] - 0.2).abs() < 1e-12);
        }
        assert!(write_trace(&spec, &cfg, 4, io::sink()).is_err());
    }
}
