//! Event-driven simulation of one replication of a FIFO single-server chain.
//!
//! Jobs enter stage 0 as a Poisson stream; a departure from stage `i` is an
//! arrival at stage `i + 1` at the same instant. At equal timestamps,
//! departures are processed before arrivals, then events run in scheduling
//! order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand_chacha::ChaCha8Rng;

use super::rng::{exponential_sample, Role, Substream};
use crate::queueing::{Discipline, Rate};

/// One stage-level visit of a job, as emitted to traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub job_id: usize,
    /// Zero-based stage index.
    pub stage: usize,
    pub arrival: f64,
    pub service_start: f64,
    pub departure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Departure { stage: usize },
    Arrival { stage: usize, job: usize },
}

impl Kind {
    fn rank(&self) -> u8 {
        match self {
            Kind::Departure { .. } => 0,
            Kind::Arrival { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that BinaryHeap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.rank().cmp(&self.kind.rank()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Visit {
    arrival: f64,
    service_start: f64,
}

struct Station {
    rate: Rate,
    rng: ChaCha8Rng,
    waiting: VecDeque<usize>,
    in_service: Option<usize>,
    sojourn_sum: f64,
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ReplicationStats {
    /// Mean end-to-end sojourn over retained jobs.
    pub mean_total: f64,
    /// Mean sojourn per stage over retained jobs.
    pub stage_means: Vec<f64>,
    pub retained: usize,
}

pub(crate) struct ChainRun<'a> {
    pub lambda: Rate,
    pub rates: &'a [Rate],
    pub discipline: Discipline,
    pub seed: u64,
    pub replication: u32,
    /// Offset added to local stage indices when deriving substreams.
    pub stream_stage_offset: u32,
    pub jobs: usize,
    pub warmup: usize,
}

impl ChainRun<'_> {
    pub fn run(&self, mut trace: Option<&mut dyn FnMut(TraceRecord)>) -> ReplicationStats {
        debug_assert!(self.warmup < self.jobs);
        let substream = |stage: usize, role| Substream {
            replication: self.replication,
            stage: self.stream_stage_offset + stage as u32,
            role,
        };
        let mut arrivals_rng = substream(0, Role::Arrivals).rng(self.seed);
        let mut stations: Vec<Station> = self
            .rates
            .iter()
            .enumerate()
            .map(|(i, &rate)| Station {
                rate,
                rng: substream(i, Role::Service).rng(self.seed),
                waiting: VecDeque::new(),
                in_service: None,
                sojourn_sum: 0.0,
            })
            .collect();

        let last = stations.len() - 1;
        let mut chain_arrival = vec![0.0f64; self.jobs];
        let mut visit = vec![Visit::default(); self.jobs];
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let mut push = |heap: &mut BinaryHeap<Event>, time: f64, kind: Kind| {
            heap.push(Event { time, seq, kind });
            seq += 1;
        };

        let mut generated = 0usize;
        let mut completed = 0usize;
        let mut total_sum = 0.0f64;

        push(&mut heap, exponential_sample(&mut arrivals_rng, self.lambda), Kind::Arrival { stage: 0, job: 0 });
        generated += 1;

        while let Some(Event { time: now, kind, .. }) = heap.pop() {
            match kind {
                Kind::Arrival { stage, job } => {
                    if stage == 0 {
                        chain_arrival[job] = now;
                        if generated < self.jobs {
                            let next = now + exponential_sample(&mut arrivals_rng, self.lambda);
                            push(&mut heap, next, Kind::Arrival { stage: 0, job: generated });
                            generated += 1;
                        }
                    }
                    visit[job].arrival = now;
                    let station = &mut stations[stage];
                    if station.in_service.is_none() {
                        station.in_service = Some(job);
                        visit[job].service_start = now;
                        let done = now + service_time(station, self.discipline);
                        push(&mut heap, done, Kind::Departure { stage });
                    } else {
                        station.waiting.push_back(job);
                    }
                }
                Kind::Departure { stage } => {
                    let station = &mut stations[stage];
                    let job = station.in_service.take().expect("departure from idle station");
                    let Visit { arrival, service_start } = visit[job];
                    if job >= self.warmup {
                        station.sojourn_sum += now - arrival;
                    }
                    if let Some(sink) = trace.as_mut() {
                        sink(TraceRecord { job_id: job, stage, arrival, service_start, departure: now });
                    }
                    if let Some(next) = station.waiting.pop_front() {
                        station.in_service = Some(next);
                        visit[next].service_start = now;
                        let done = now + service_time(station, self.discipline);
                        push(&mut heap, done, Kind::Departure { stage });
                    }
                    if stage < last {
                        push(&mut heap, now, Kind::Arrival { stage: stage + 1, job });
                    } else {
                        if job >= self.warmup {
                            total_sum += now - chain_arrival[job];
                        }
                        completed += 1;
                        if completed == self.jobs {
                            break;
                        }
                    }
                }
            }
        }

        let retained = self.jobs - self.warmup;
        let denom = retained as f64;
        ReplicationStats {
            mean_total: total_sum / denom,
            stage_means: stations.iter().map(|s| s.sojourn_sum / denom).collect(),
            retained,
        }
    }
}

fn service_time(station: &mut Station, discipline: Discipline) -> f64 {
    match discipline {
        Discipline::ExponentialService => exponential_sample(&mut station.rng, station.rate),
        Discipline::DeterministicService => station.rate.mean_interval(),
    }
}
