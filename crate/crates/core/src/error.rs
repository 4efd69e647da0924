use std::fmt;

use thiserror::Error;

/// Where in a scenario an unstable queue was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueLocation {
    /// A lone queue, outside of any chain.
    Single,
    /// Zero-based stage index within a microservice chain.
    Stage(usize),
    /// The unsplit monolith.
    Monolith,
}

impl fmt::Display for QueueLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueueLocation::Single => write!(f, "queue"),
            QueueLocation::Stage(i) => write!(f, "stage {}", i + 1),
            QueueLocation::Monolith => write!(f, "monolith"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("rate must be a finite positive number, got {0}")]
    InvalidRate(f64),

    #[error("epsilon must be a finite positive number, got {0}")]
    InvalidEpsilon(f64),

    #[error("{location} is unstable: arrival rate {lambda} >= service rate {mu}, no steady state exists")]
    UnstableQueue {
        location: QueueLocation,
        lambda: f64,
        mu: f64,
    },

    #[error(
        "worst-case monolith rate {monolith_rate} does not exceed arrival rate {lambda} \
         (lambda={lambda}, epsilon={epsilon}, mu={mu}): lambda^2 + lambda*epsilon - mu*epsilon >= 0"
    )]
    UnstableMonolith {
        lambda: f64,
        epsilon: f64,
        mu: f64,
        monolith_rate: f64,
    },

    #[error("invalid stage count n={n}: must lie in [{min}, {max}]")]
    InvalidN { n: usize, min: usize, max: usize },

    #[error("{} infeasible grid point(s): lambda = {}", .points.len(), format_points(.points))]
    InfeasibleGridPoint { points: Vec<f64> },

    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_points(points: &[f64]) -> String {
    points.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
