//! Seed handling.
//!
//! Every random stream is a `ChaCha8Rng` seeded from a 64-bit value. Replicate
//! seeds are derived from a root seed as `root ^ splitmix64(index)`, and the
//! independent streams inside one replicate (initial state, system noise,
//! observation noise) are derived from the replicate seed with a fixed tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `root`.
pub fn replicate_seed(root: u64, index: u64) -> u64 {
    root ^ splitmix64(index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    InitialState,
    SystemNoise,
    ObservationNoise,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::InitialState => 0x5EED_0001,
            Stream::SystemNoise => 0x5EED_0002,
            Stream::ObservationNoise => 0x5EED_0003,
        }
    }
}

pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    splitmix64(seed ^ splitmix64(stream.tag()))
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
