//! Hierarchical, counter-based random streams.
//!
//! A root seed is refined by mixing in indices (replica, time, domain tag)
//! with the SplitMix64 finalizer. The resulting key seeds a ChaCha8 generator
//! whose 64-bit stream id selects the time step, so every draw is a pure
//! function of `(seed, replica, domain, t)` and independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-generators used by the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    EdgeNoise = 1,
    Topology = 2,
    Reception = 3,
    Quantization = 4,
    InitialState = 5,
    Suite = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed(u64);

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        Self(splitmix64(seed))
    }

    pub fn key(self) -> u64 {
        self.0
    }

    /// Derives the seed of child `index` (a replica, a block, a sweep point).
    pub fn child(self, index: u64) -> Self {
        Self(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn domain(self, domain: Domain) -> Self {
        self.child((domain as u64) << 56)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Generator positioned at the start of stream `counter`.
    pub fn rng_at(self, counter: u64) -> ChaCha8Rng {
        let mut rng = self.rng();
        rng.set_stream(counter);
        rng
    }
}

/// Seed of replica `r` under a root seed.
pub fn replica_seed(root: u64, r: u64) -> StreamSeed {
    StreamSeed::new(root).child(r)
}
