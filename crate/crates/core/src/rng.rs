//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! 64-bit seed and a 64-bit stream id. ChaCha exposes independent streams for
//! one key, so Monte Carlo work can be split across threads by handing each
//! task its own [`RngStream`] without changing the draws any task sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A `(seed, stream_id)` pair identifying one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Instantiates the generator. Calling this twice yields identical draws.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Derives a child stream labelled by `(tag, index)`.
    ///
    /// Children share the seed and get a stream id obtained by hashing the
    /// parent id with the labels, so distinct labels select distinct streams.
    pub fn substream(&self, tag: u64, index: u64) -> Self {
        let mixed = splitmix64(splitmix64(self.stream_id ^ splitmix64(tag)) ^ index);
        Self {
            seed: self.seed,
            stream_id: mixed,
        }
    }
}

/// Stream tags used across the crate.
pub mod tags {
    pub const EVAL_POINT: u64 = 0x4556_414c;
    pub const EVAL_VECTOR: u64 = 0x5645_4354;
    pub const EVAL_CHANNEL: u64 = 0x4348_414e;
    pub const EVAL_DETECTOR: u64 = 0x4445_5443;
    pub const TRAIN_BATCH: u64 = 0x4241_5443;
    pub const DIAGNOSTICS: u64 = 0x4449_4147;
    pub const VALIDATE: u64 = 0x5641_4c49;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
