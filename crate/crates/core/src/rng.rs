//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by the master
//! seed plus a stream id, so adding a consumer (or a cycle) never shifts the
//! draws seen by another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream namespaces. The low 32 bits of a stream id carry a sub-index
/// (usually the cycle number).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Purpose {
    Generate = 1,
    Split = 2,
    SiamInit = 3,
    SiamTrain = 4,
    ProbeInit = 5,
    ProbeTrain = 6,
    ScratchInit = 7,
    ScratchTrain = 8,
    Svm = 9,
    Acquire = 10,
}

pub fn stream(seed: u64, purpose: Purpose, index: u32) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | index as u64);
    rng
}

/// Seed for a child computation; used where an API takes a plain `u64` seed.
pub fn derive_seed(seed: u64, purpose: Purpose, index: u32) -> u64 {
    use rand::RngCore;
    stream(seed, purpose, index).next_u64()
}
