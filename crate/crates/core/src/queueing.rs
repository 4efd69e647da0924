//! Closed-form mean-value results for single FIFO queues with Poisson arrivals.
//!
//! Two service disciplines are covered: exponential service (M/M/1) and
//! deterministic service (M/D/1, via Pollaczek–Khinchine). Every function here
//! is a pure function of its arguments.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, QueueLocation, Result};

/// Utilization above which a queue is flagged as near saturation. Informational only.
pub const SATURATION_WARNING_RHO: f64 = 0.99;

/// A strictly positive rate, in jobs per unit time.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Rate(f64);

impl Rate {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Rate(value))
        } else {
            Err(Error::InvalidRate(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// Mean time between events at this rate.
    #[inline]
    pub fn mean_interval(self) -> f64 {
        1.0 / self.0
    }
}

impl TryFrom<f64> for Rate {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Rate::new(value)
    }
}

impl From<Rate> for f64 {
    fn from(rate: Rate) -> f64 {
        rate.0
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Headroom of the worst-case hot stage's service rate above the arrival rate.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Epsilon(value))
        } else {
            Err(Error::InvalidEpsilon(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Epsilon {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Epsilon::new(value)
    }
}

impl From<Epsilon> for f64 {
    fn from(eps: Epsilon) -> f64 {
        eps.0
    }
}

/// Service-time distribution of every queue in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    /// Exponentially distributed service times (M/M/1).
    ExponentialService,
    /// Fixed service time 1/mu (M/D/1).
    DeterministicService,
}

impl Discipline {
    pub const ALL: [Discipline; 2] = [Discipline::ExponentialService, Discipline::DeterministicService];

    /// Kendall-style short name: `mm1` or `md1`.
    pub fn kendall(self) -> &'static str {
        match self {
            Discipline::ExponentialService => "mm1",
            Discipline::DeterministicService => "md1",
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kendall())
    }
}

/// Steady-state mean metrics of one queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub rho: f64,
    /// Mean time spent waiting before service starts.
    pub wait_time: f64,
    /// Mean time in system, waiting plus service.
    pub sojourn_time: f64,
}

impl StageMetrics {
    pub fn is_near_saturation(&self) -> bool {
        self.rho > SATURATION_WARNING_RHO
    }
}

/// Offered load `lambda / mu`. No stability check.
#[inline]
pub fn utilization(lambda: Rate, mu: Rate) -> f64 {
    lambda.get() / mu.get()
}

fn check_stable(lambda: Rate, mu: Rate, location: QueueLocation) -> Result<()> {
    if lambda.get() < mu.get() {
        Ok(())
    } else {
        Err(Error::UnstableQueue {
            location,
            lambda: lambda.get(),
            mu: mu.get(),
        })
    }
}

/// M/M/1 mean sojourn time `1 / (mu - lambda)`.
pub fn mm1_sojourn(lambda: Rate, mu: Rate) -> Result<StageMetrics> {
    check_stable(lambda, mu, QueueLocation::Single)?;
    let sojourn_time = 1.0 / (mu.get() - lambda.get());
    Ok(StageMetrics {
        rho: utilization(lambda, mu),
        wait_time: sojourn_time - mu.mean_interval(),
        sojourn_time,
    })
}

/// M/D/1 mean sojourn time `1/mu + (1/(2 mu)) * lambda / (mu - lambda)`.
pub fn md1_sojourn(lambda: Rate, mu: Rate) -> Result<StageMetrics> {
    check_stable(lambda, mu, QueueLocation::Single)?;
    let (l, m) = (lambda.get(), mu.get());
    let wait_time = (1.0 / (2.0 * m)) * (l / (m - l));
    Ok(StageMetrics {
        rho: utilization(lambda, mu),
        wait_time,
        sojourn_time: 1.0 / m + wait_time,
    })
}

pub fn sojourn(discipline: Discipline, lambda: Rate, mu: Rate) -> Result<StageMetrics> {
    match discipline {
        Discipline::ExponentialService => mm1_sojourn(lambda, mu),
        Discipline::DeterministicService => md1_sojourn(lambda, mu),
    }
}

/// Like [`sojourn`], but an instability error names `location`.
pub(crate) fn sojourn_at(
    discipline: Discipline,
    lambda: Rate,
    mu: Rate,
    location: QueueLocation,
) -> Result<StageMetrics> {
    sojourn(discipline, lambda, mu).map_err(|e| match e {
        Error::UnstableQueue { lambda, mu, .. } => Error::UnstableQueue { location, lambda, mu },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(v: f64) -> Rate {
        Rate::new(v).unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    #[test]
    fn rate_rejects_nonpositive() {
        assert!(matches!(Rate::new(0.0), Err(Error::InvalidRate(_))));
        assert!(Rate::new(-1.0).is_err());
        assert!(Rate::new(f64::NAN).is_err());
        assert!(Rate::new(f64::INFINITY).is_err());
        assert!(Epsilon::new(0.0).is_err());
        assert!(Epsilon::new(1e-300).is_ok());
    }

    #[test]
    fn rate_deserialize_validates() {
        assert!(serde_json::from_str::<Rate>("2.5").is_ok());
        assert!(serde_json::from_str::<Rate>("0").is_err());
    }

    #[test]
    fn utilization_examples() {
        assert_eq!(utilization(r(1.0), r(2.0)), 0.5);
        assert_eq!(utilization(r(2.0), r(2.0)), 1.0);
        assert!(rel_close(utilization(r(1.0), r(18.0 / 7.0)), 7.0 / 18.0, 1e-12));
    }

    #[test]
    fn mm1_examples() {
        assert!(rel_close(mm1_sojourn(r(1.0), r(2.0)).unwrap().sojourn_time, 1.0, 1e-12));
        assert!(rel_close(mm1_sojourn(r(1e-12), r(2.0)).unwrap().sojourn_time, 0.5, 1e-9));
        let m = mm1_sojourn(r(1.0), r(18.0 / 7.0)).unwrap();
        assert!(rel_close(m.sojourn_time, 7.0 / 11.0, 1e-12));
        assert!(rel_close(m.rho, 7.0 / 18.0, 1e-12));
    }

    #[test]
    fn md1_examples() {
        assert!(rel_close(md1_sojourn(r(1.0), r(2.0)).unwrap().sojourn_time, 0.75, 1e-12));
        assert!(rel_close(md1_sojourn(r(1e-12), r(2.0)).unwrap().sojourn_time, 0.5, 1e-9));
        assert!(rel_close(md1_sojourn(r(1.0), r(2.5)).unwrap().sojourn_time, 0.4 + 0.2 / 1.5, 1e-12));
    }

    #[test]
    fn dispatch_matches_disciplines() {
        let exp = sojourn(Discipline::ExponentialService, r(1.0), r(2.0)).unwrap();
        let det = sojourn(Discipline::DeterministicService, r(1.0), r(2.0)).unwrap();
        assert_eq!(exp, mm1_sojourn(r(1.0), r(2.0)).unwrap());
        assert_eq!(det, md1_sojourn(r(1.0), r(2.0)).unwrap());
        let tiny = sojourn(Discipline::DeterministicService, r(1e-12), r(2.0)).unwrap();
        assert!(rel_close(tiny.sojourn_time, 0.5, 1e-9));
    }

    #[test]
    fn saturation_is_rejected() {
        for d in Discipline::ALL {
            let err = sojourn(d, r(2.0), r(2.0)).unwrap_err();
            assert!(matches!(err, Error::UnstableQueue { lambda, mu, .. } if lambda == 2.0 && mu == 2.0));
            assert!(sojourn(d, r(3.0), r(2.0)).is_err());
        }
    }

    #[test]
    fn near_saturation_flag() {
        assert!(mm1_sojourn(r(0.995), r(1.0)).unwrap().is_near_saturation());
        assert!(!mm1_sojourn(r(0.9), r(1.0)).unwrap().is_near_saturation());
    }

    #[test]
    fn sojourn_at_names_location() {
        let err = sojourn_at(Discipline::ExponentialService, r(3.0), r(2.0), QueueLocation::Stage(1))
            .unwrap_err();
        assert!(matches!(err, Error::UnstableQueue { location: QueueLocation::Stage(1), .. }));
        assert!(err.to_string().contains("stage 2"));
    }

    fn stable_pair() -> impl Strategy<Value = (f64, f64)> {
        (1e-3f64..1e3, 0.001f64..0.999).prop_map(|(mu, rho)| (rho * mu, mu))
    }

    proptest! {
        #[test]
        fn stability_guard(mu in 1e-3f64..1e3, excess in 1.0f64..10.0) {
            for d in Discipline::ALL {
                prop_assert!(sojourn(d, r(mu * excess), r(mu)).is_err());
            }
        }

        #[test]
        fn md1_never_exceeds_mm1((l, m) in stable_pair()) {
            let det = md1_sojourn(r(l), r(m)).unwrap().sojourn_time;
            let exp = mm1_sojourn(r(l), r(m)).unwrap().sojourn_time;
            prop_assert!(det < exp);
        }

        #[test]
        fn time_scaling((l, m) in stable_pair(), c in 1e-3f64..1e3) {
            for d in Discipline::ALL {
                let base = sojourn(d, r(l), r(m)).unwrap().sojourn_time;
                let scaled = sojourn(d, r(c * l), r(c * m)).unwrap().sojourn_time;
                prop_assert!(rel_close(scaled, base / c, 1e-12), "{} vs {}", scaled, base / c);
            }
        }

        #[test]
        fn monotone_in_rates((l, m) in stable_pair(), bump in 1.0001f64..1.5) {
            for d in Discipline::ALL {
                let base = sojourn(d, r(l), r(m)).unwrap().sojourn_time;
                let faster = sojourn(d, r(l), r(m * bump)).unwrap().sojourn_time;
                prop_assert!(faster < base);
                let lighter = sojourn(d, r(l / bump), r(m)).unwrap().sojourn_time;
                prop_assert!(lighter < base);
            }
        }

        #[test]
        fn wait_plus_service_is_sojourn((l, m) in stable_pair()) {
            for d in Discipline::ALL {
                let s = sojourn(d, r(l), r(m)).unwrap();
                prop_assert!(rel_close(s.wait_time + 1.0 / m, s.sojourn_time, 1e-12));
                prop_assert!(s.wait_time >= 0.0);
                prop_assert!(s.rho > 0.0 && s.rho < 1.0);
            }
        }
    }
}
