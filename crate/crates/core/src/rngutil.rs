//! Deterministic per-replicate RNG sub-streams.
//!
//! Every replicate owns a private stream derived from `(seed, replicate
//! index)`, so results are identical regardless of scheduling or worker
//! count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut state = seed ^ replicate.wrapping_mul(0xA076_1D64_78BD_642F);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
