//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is
//! derived from `(master_seed, purpose, index)` and whose 64-bit stream id is
//! a per-item counter (permutation number, array number, ...). Any work item
//! can therefore construct its own generator without touching shared state,
//! and results do not depend on how items are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinguishes independent families of draws sharing one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Assignment = 0x6173_7369_676e,
    Permutation = 0x7065_726d_7574,
    Synthetic = 0x7379_6e74_6865,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a purpose tag and an index into a fresh 64-bit seed.
pub fn derive_seed(master_seed: u64, purpose: Purpose, index: u64) -> u64 {
    let mut state = master_seed ^ (purpose as u64).rotate_left(17);
    let a = splitmix64(&mut state);
    let mut state = a ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93);
    splitmix64(&mut state)
}

/// Generator for item `counter` of the family `(seed, purpose)`.
pub fn stream(seed: u64, purpose: Purpose, counter: u64) -> ChaCha8Rng {
    let mut state = seed ^ (purpose as u64);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(counter);
    rng
}
