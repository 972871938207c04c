//! Seeded random streams.
//!
//! Every consumer (a flow's arrival process, a flow's packet lengths, a
//! link's per-hop length redraws, a replication) gets its own generator
//! whose seed is a stable hash of `(master seed, stream tag, entity id)`.
//! Adding or removing an entity never shifts the draws seen by another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    FlowArrivals = 1,
    FlowLengths = 2,
    LinkLengths = 3,
    Replication = 4,
    Topology = 5,
    Sampling = 6,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, tag: StreamTag, id: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(tag as u64)) ^ splitmix64(id.wrapping_add(1)))
}

pub fn stream(master: u64, tag: StreamTag, id: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tag, id))
}

/// Inverse-transform exponential draw with the given rate.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}
