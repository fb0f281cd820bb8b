//! Seeded random streams.
//!
//! Every consumer of randomness derives its generator from a user seed plus a
//! fixed [`Stream`] id, so changing how one stage draws numbers never shifts
//! the sequence seen by another stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    TrustedSelection = 1,
    NoiseInjection = 2,
    ParamInit = 3,
    Shuffle = 4,
    Synthetic = 5,
    Split = 6,
    Augment = 7,
    Probe = 8,
}

/// Independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
