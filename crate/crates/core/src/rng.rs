//! Counter-based random substreams.
//!
//! Every stochastic quantity in the crate is drawn from a substream keyed by
//! `(master seed, purpose tag, index)`. The key material is obtained by
//! running SplitMix64 over the master seed mixed with an FNV-1a hash of the
//! tag; the index selects the ChaCha stream. Two substreams with different
//! keys are independent for all practical purposes, and the draw for a given
//! index never depends on how work was scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// The generator type handed to every sampler.
pub type StreamRng = ChaCha8Rng;

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the substream for `(seed, tag, index)`.
pub fn substream(seed: u64, tag: &str, index: u64) -> StreamRng {
    let mut state = seed ^ fnv1a(tag).rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, for handing a whole sub-experiment its own master
/// seed (e.g. one per `m` in a convergence sweep).
pub fn child_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut state = seed ^ fnv1a(tag) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93);
    splitmix64(&mut state)
}

/// Runs `f` once per index `0..n`, each call with the substream
/// `(seed, tag, i)`, in parallel. The output order follows the index.
pub fn par_draws<T, F>(seed: u64, tag: &str, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(&mut substream(seed, tag, i as u64), i))
        .collect()
}
