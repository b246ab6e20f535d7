//! Seed derivation.
//!
//! Every random decision in the pipeline draws from a ChaCha stream whose seed
//! is derived from the run seed, a stream tag and an index (usually the epoch).
//! Any epoch can therefore be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags keep derived seeds for different purposes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Pairs = 1,
    Batches = 2,
    Segments = 3,
    Init = 4,
    Mixing = 5,
    Word2Vec = 6,
    Synth = 7,
    Finetune = 8,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// `seed ⊕ mix(stream, index)`, finalised with splitmix64.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let tag = splitmix64((stream as u64).wrapping_mul(0xD1B5_4A32_D192_ED03) ^ splitmix64(index));
    splitmix64(seed ^ tag)
}

pub fn rng_for(seed: u64, stream: Stream, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, index))
}
