//! Closed-form queueing analysis of splitting a monolithic service into a
//! chain of microservices, checked against a discrete-event simulator.
//!
//! * [`queueing`]: M/M/1 and M/D/1 mean sojourn times.
//! * [`decomposition`]: worst-case and best-case splits, chain-versus-monolith
//!   comparison, and arrival-rate sweeps.
//! * [`sim`]: seeded, replicated discrete-event simulation of single queues
//!   and chains.
//! * [`cli`]: the `microsplit` command-line front end.

pub mod cli;
pub mod decomposition;
pub mod error;
pub mod queueing;
pub mod sim;

pub use decomposition::{
    analyze, build_best_case, build_worst_case, sweep, verify_improvement, worst_case_monolith_rate, CaseLabel,
    ChainSpec, ComparisonResult, Scenario, SplitCase, SweepMode, SweepRow, SweepTable,
};
pub use error::{Error, QueueLocation, Result};
pub use queueing::{md1_sojourn, mm1_sojourn, sojourn, utilization, Discipline, Epsilon, Rate, StageMetrics};
pub use sim::{simulate_chain, simulate_single_queue, FeedMode, SimConfig, SimEstimate};
