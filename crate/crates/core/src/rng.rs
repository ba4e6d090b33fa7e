//! Counter-based seeding.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by
//! `(root seed, domain, counter)`. The root seed and domain fix the key, the
//! counter (sample index, restart index, ...) selects the 64-bit stream id.
//! Draws are therefore a pure function of that triple and never depend on how
//! work is scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identity of the generator, pinned into every report.
pub const GENERATOR_ID: &str = "chacha8-splitmix64-key/stream=counter/v1";

/// Separates independent uses of the same root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    NormStart = 1,
    Signs = 2,
    RadSum = 3,
    WitnessStart = 4,
    Corpus = 5,
    Subsets = 6,
    Shifts = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `counter` of the generator keyed by `(seed, domain)`.
pub fn stream(seed: u64, domain: Domain, counter: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(domain as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(counter);
    rng
}

/// Child root seed for an independent sub-computation identified by `tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Yields one ±1 per call, consuming a single bit of the underlying stream
/// (least significant bit first within each 64-bit word).
pub struct SignBits<R: RngCore> {
    rng: R,
    word: u64,
    left: u32,
}

impl<R: RngCore> SignBits<R> {
    pub fn new(rng: R) -> Self {
        Self {
            rng,
            word: 0,
            left: 0,
        }
    }

    #[inline]
    pub fn next_sign(&mut self) -> f64 {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let bit = self.word & 1;
        self.word >>= 1;
        self.left -= 1;
        if bit == 1 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Signs for sample `counter` of a sign stream rooted at `seed`.
pub fn sign_bits(seed: u64, counter: u64) -> SignBits<ChaCha8Rng> {
    SignBits::new(stream(seed, Domain::Signs, counter))
}
