//! Deterministic, named RNG streams derived from a single run seed.
//!
//! Every random decision in the pipeline draws from a stream keyed by
//! `(seed, purpose, index)`. Streams are independent of thread schedule and
//! call order: a task's stream depends only on its key, never on how many
//! draws other tasks made. The generator is ChaCha8 seeded through splitmix64,
//! both of which are portable across platforms and pinned by version.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One round of the splitmix64 mixing function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a label, used to key streams on strings.
pub fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// An unbiased draw from [0, bound), by rejection from the top of the range.
pub(crate) fn draw_index(rng: &mut impl RngCore, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let zone = u64::MAX - u64::MAX % bound;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % bound;
        }
    }
}

/// Fisher-Yates shuffle of the first `prefix` positions (the classic full
/// shuffle when `prefix == items.len()`).
pub(crate) fn shuffle_prefix<T>(rng: &mut impl RngCore, items: &mut [T], prefix: usize) {
    let len = items.len();
    for i in 0..prefix.min(len.saturating_sub(1)) {
        let j = i + draw_index(rng, (len - i) as u64) as usize;
        items.swap(i, j);
    }
}

/// The ChaCha8 stream for `purpose`/`index` under `seed`.
///
/// Distinct purposes and indices yield statistically independent streams;
/// identical keys always yield the identical stream.
pub fn stream(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed ^ fnv1a(purpose)) ^ index);
    ChaCha8Rng::seed_from_u64(mixed)
}
