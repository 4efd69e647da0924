//! Deterministic random substreams.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`). The 256-bit key is
//! expanded from the master seed with `SeedableRng::seed_from_u64`; each
//! substream selects its own ChaCha stream id, so substreams never overlap
//! and can be created in any order on any thread.
//!
//! Stream id layout (64 bits): `replication << 32 | stage << 1 | role`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::queueing::Rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Arrivals = 0,
    Service = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Substream {
    pub replication: u32,
    /// Stage index; must be below 2^31.
    pub stage: u32,
    pub role: Role,
}

impl Substream {
    pub fn stream_id(&self) -> u64 {
        debug_assert!(self.stage < (1 << 31));
        (u64::from(self.replication) << 32) | (u64::from(self.stage) << 1) | self.role as u64
    }

    pub fn rng(&self, master_seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(self.stream_id());
        rng
    }
}

/// Inverse-transform exponential draw, `-ln(u) / rate` for `u` in `(0, 1]`.
#[inline]
pub fn exponential_from_uniform(u: f64, rate: Rate) -> f64 {
    debug_assert!(u > 0.0 && u <= 1.0);
    -u.ln() / rate.get()
}

/// Exponential sample with the given rate. `u = 1 - U[0,1)` lies in `(0, 1]`,
/// so the logarithm is always finite; `u = 1` gives 0.
#[inline]
pub fn exponential_sample<R: Rng + ?Sized>(rng: &mut R, rate: Rate) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    exponential_from_uniform(u, rate)
}
