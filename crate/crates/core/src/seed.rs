//! Seed derivation for replica-parallel Monte Carlo.
//!
//! Replica `i` of an experiment with master seed `s` draws from a ChaCha8
//! stream seeded with `splitmix64(s ^ i * 0x9E3779B97F4A7C15)`. Replicas are
//! run with rayon and collected in index order, so results do not depend on
//! the thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type Rng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replica_seed(master: u64, replica: u64) -> u64 {
    splitmix64(master ^ replica.wrapping_mul(GOLDEN_GAMMA))
}

pub fn replica_rng(master: u64, replica: u64) -> Rng {
    Rng::seed_from_u64(replica_seed(master, replica))
}

/// Runs `f(replica_index, seed)` for every replica in parallel and returns
/// the results in replica order.
pub fn run_replicas<T, F>(master: u64, replicas: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    (0..replicas)
        .into_par_iter()
        .map(|i| f(i, replica_seed(master, i as u64)))
        .collect()
}
