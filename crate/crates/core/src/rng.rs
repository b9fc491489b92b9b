//! Deterministic random streams.
//!
//! Every stochastic draw in a run comes from a ChaCha8 stream whose seed is a
//! mix of the run seed and a small tuple of coordinates (user, step, phase).
//! Draws therefore never depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Random-stream phases inside one simulation step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Init = 1,
    Post = 2,
    Exogenous = 3,
    Detect = 4,
    Rank = 5,
    Recommend = 6,
    Accept = 7,
    Graph = 8,
    Bandit = 9,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a seed and a list of coordinates.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix64(seed), |acc, &c| mix64(acc ^ mix64(c)))
}

pub fn stream(seed: u64, coords: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, coords))
}

/// Stream for one (user, step, phase) cell of a run.
pub fn user_stream(run_seed: u64, user: usize, step: usize, phase: Phase) -> SimRng {
    stream(run_seed, &[phase as u64, user as u64, step as u64])
}

/// Seed of the `run_index`-th member of an ensemble.
pub fn run_seed(master_seed: u64, run_index: usize) -> u64 {
    derive_seed(master_seed, &[0xE45E_AB1E, run_index as u64])
}
