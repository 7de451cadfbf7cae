//! Counter-based random streams.
//!
//! A stream is identified by `(global seed, purpose tag, replication index)`.
//! The seed and tag are mixed into a ChaCha key and the replication index
//! selects the ChaCha stream, so every replication owns an independent
//! sequence that does not depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes.
fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: String,
    pub index: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: impl Into<String>, index: u64) -> Self {
        Self {
            seed,
            purpose: purpose.into(),
            index,
        }
    }

    pub fn with_index(&self, index: u64) -> Self {
        Self {
            index,
            ..self.clone()
        }
    }

    /// Derive a child key whose purpose tag extends this one.
    pub fn child(&self, suffix: &str) -> Self {
        Self {
            seed: self.seed,
            purpose: format!("{}/{}", self.purpose, suffix),
            index: self.index,
        }
    }

    pub fn stream(&self) -> Stream {
        stream(self.seed, &self.purpose, self.index)
    }
}

pub fn stream(seed: u64, purpose: &str, index: u64) -> Stream {
    let mut state = seed ^ tag_hash(purpose).rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
