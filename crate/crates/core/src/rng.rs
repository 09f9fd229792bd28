//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha stream derived from the scenario
//! seed, so adding or reordering draws in one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Placement = 1,
    Fading = 2,
    Sensor = 3,
    Exploration = 4,
    Replay = 5,
    Weights = 6,
    Episode = 7,
}

/// Independent stream for `(purpose, index)` under `seed`.
pub fn substream(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | (index & 0xffff_ffff));
    rng
}

/// Seed of episode `episode` in a run rooted at `seed`. Episode 0 uses the
/// root seed itself.
pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    if episode == 0 {
        return seed;
    }
    use rand::Rng;
    substream(seed, Stream::Episode, episode).gen()
}
