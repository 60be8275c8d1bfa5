//! Seeded random streams.
//!
//! Every consumer draws from ChaCha8 keyed by the run seed, with a fixed
//! stream id per consumer. ChaCha is counter based, so streams are
//! independent and changing how many numbers one consumer draws never
//! shifts another consumer's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INTERIOR_STREAM: u64 = 0;
pub const BOUNDARY_STREAM: u64 = 1;
pub const NETWORK_STREAM: u64 = 2;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
