//! Seeded random tapes.
//!
//! Every tape is a ChaCha8 stream keyed by `(seed, stream)`. Machines use their
//! id as stream, the remaining consumers use the reserved ids below, so no two
//! consumers ever share draws.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RESERVED: u64 = 1 << 62;
pub const STREAM_INPUT: u64 = RESERVED;
pub const STREAM_GLOBAL: u64 = RESERVED | 1;
pub const STREAM_ADVERSARY: u64 = RESERVED | 2;
pub const STREAM_EXPANDER: u64 = RESERVED | 3;
pub const STREAM_HARNESS: u64 = RESERVED | 4;

#[derive(Clone, Debug)]
pub struct RandomTape {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomTape {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomTape { seed, stream, rng }
    }

    pub fn machine(seed: u64, id: usize) -> Self {
        Self::new(seed, id as u64)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn coin(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            // still consume a draw so tapes stay aligned across parameter changes
            self.rng.next_u64();
            return true;
        }
        if p <= 0.0 {
            self.rng.next_u64();
            return false;
        }
        self.rng.gen_bool(p)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn bit(&mut self) -> bool {
        self.rng.next_u32() & 1 == 1
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Backing store of the global random bit service.
///
/// Bit `s` is bit `s mod 64` of word `s / 64` of the global stream. Words are
/// generated lazily and kept, so repeated tags always agree.
#[derive(Clone, Debug)]
pub struct GlobalBits {
    tape: RandomTape,
    words: Vec<u64>,
}

impl GlobalBits {
    pub fn new(seed: u64) -> Self {
        GlobalBits { tape: RandomTape::new(seed, STREAM_GLOBAL), words: Vec::new() }
    }

    pub fn bit(&mut self, tag: u64) -> bool {
        let w = (tag / 64) as usize;
        while self.words.len() <= w {
            let x = self.tape.next_u64();
            self.words.push(x);
        }
        (self.words[w] >> (tag % 64)) & 1 == 1
    }

    pub fn cached_words(&self) -> usize {
        self.words.len()
    }
}

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over a combined word; used to derive sub-seeds
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleaved_streams_are_isolated() {
        let mut a = RandomTape::new(9, 1);
        let mut b = RandomTape::new(9, 2);
        let mut seq_a = Vec::new();
        let mut seq_b = Vec::new();
        for i in 0..16 {
            if i % 3 == 0 {
                seq_b.push(b.next_u64());
            }
            seq_a.push(a.next_u64());
        }
        let mut fresh = RandomTape::new(9, 1);
        let again: Vec<u64> = (0..16).map(|_| fresh.next_u64()).collect();
        assert_eq!(seq_a, again);
        let mut fresh_b = RandomTape::new(9, 2);
        let again_b: Vec<u64> = (0..seq_b.len()).map(|_| fresh_b.next_u64()).collect();
        assert_eq!(seq_b, again_b);
    }

    #[test]
    fn global_bits_replay() {
        let mut g1 = GlobalBits::new(42);
        let mut g2 = GlobalBits::new(42);
        let a: Vec<bool> = (0..64).map(|s| g1.bit(s)).collect();
        let b: Vec<bool> = (0..64).rev().map(|s| g2.bit(s)).collect::<Vec<_>>().into_iter().rev().collect();
        assert_eq!(a, b);
        assert_eq!(g1.bit(7), g1.bit(7));
    }
}
