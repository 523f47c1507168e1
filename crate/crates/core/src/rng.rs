//! Deterministic random streams.
//!
//! Every consumer of randomness derives its own ChaCha8 stream from the run
//! seed and a purpose tag, so adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags mixed into the stream id.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const EPOCH: u64 = 2;
    pub const CHAIN: u64 = 3;
    pub const EVAL_SUBSET: u64 = 4;
    pub const PATCHES: u64 = 5;
    pub const TOY: u64 = 6;
    pub const FOLDS: u64 = 7;
    pub const SYNTHETIC: u64 = 8;
    pub const ORACLE: u64 = 9;
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` for `purpose` under `seed`.
pub fn stream(seed: u64, purpose: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index);
    rng
}

/// Serializable position of a ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl StreamState {
    pub fn capture(rng: &Rng) -> Self {
        StreamState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
