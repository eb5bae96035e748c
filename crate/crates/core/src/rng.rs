//! Deterministic substreams derived from one master seed.
//!
//! Every logical stream is addressed by `(seed, stream tag, index)` and gets its
//! own ChaCha8 generator, so results never depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Logical stream tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// One Monte Carlo detection trial.
    Trial = 1,
    /// One block of the sandwich-matrix expectation.
    SandwichBlock = 2,
    /// Pseudo-true parameter sample.
    PseudoTrue = 3,
    /// Built-in self-test fixtures.
    Fixture = 4,
    /// One SNR point of a detection-probability sweep.
    SnrPoint = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for `(seed, stream, index)`. The key selects the ChaCha seed and
/// the index selects the ChaCha stream, so substreams never overlap.
pub fn substream(seed: u64, stream: Stream, index: u64) -> StreamRng {
    let key = splitmix64(seed ^ splitmix64(stream as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
