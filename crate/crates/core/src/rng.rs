//! Deterministic, splittable random streams.
//!
//! Every block of work draws from its own ChaCha stream keyed by
//! `(seed, block, purpose)`, so results do not depend on how blocks are
//! distributed over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of valid source samples per random block.
pub const BLOCK_SIZE: u64 = 1 << 16;

/// Independent consumers of randomness within one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Phases = 0,
    Reshape = 1,
    Detection = 2,
    Aux = 3,
}

pub fn stream(seed: u64, block: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block.wrapping_mul(4).wrapping_add(purpose as u64));
    rng
}
