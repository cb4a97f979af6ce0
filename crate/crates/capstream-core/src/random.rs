//! Deterministic hashing and randomness derivation.
//!
//! Every random quantity in this crate is a pure function of a 64-bit seed and
//! a handful of integer coordinates (purpose tag, key, draw index).  Fixing the
//! seeds makes each sampler's output a pure function of its input stream, which
//! is what the replay tests and the mergeable two-pass summaries rely on.

use crate::types::Key;
use std::hash::{BuildHasher, Hasher};

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; full-avalanche bijection on u64.
#[inline]
pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Absorb one word into a running state.
#[inline]
pub(crate) fn absorb(state: u64, word: u64) -> u64 {
    splitmix(state.wrapping_add(GAMMA) ^ word)
}

#[inline]
pub(crate) fn mix2(seed: u64, a: u64) -> u64 {
    absorb(absorb(seed, a), 0)
}

#[inline]
pub(crate) fn mix3(seed: u64, a: u64, b: u64) -> u64 {
    absorb(absorb(absorb(seed, a), b), 0)
}

#[inline]
pub(crate) fn mix4(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    absorb(absorb(absorb(absorb(seed, a), b), c), 0)
}

/// Map 64 random bits to [0,1) using the 53 high bits.
#[inline]
pub(crate) fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Exponential with the given rate via inversion: -ln(1-u)/rate, u in [0,1).
#[inline]
pub fn exp_from_unit(u: f64, rate: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&u));
    -(-u).ln_1p() / rate
}

/// Seeded hash functions over canonical 64-bit keys.
///
/// `unit` and `bucket` model the idealized uniform hash the sampling schemes
/// assume: repeated calls with the same arguments agree, and distinct
/// arguments give independent-looking uniforms on [0,1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyHasher {
    seed: u64,
}

const TAG_UNIT: u64 = 0x75;
const TAG_BUCKET: u64 = 0xb7;
const TAG_CANON: u64 = 0xc1;

impl KeyHasher {
    pub fn new(seed: u64) -> Self {
        KeyHasher { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Canonicalize an arbitrary byte-string key to a 64-bit identifier.
    pub fn canonicalize(&self, raw: &[u8]) -> Key {
        let mut h = absorb(self.seed, TAG_CANON);
        for chunk in raw.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            h = absorb(h, u64::from_le_bytes(word));
        }
        absorb(h, raw.len() as u64)
    }

    /// Hash(x) ~ U[0,1).
    #[inline]
    pub fn unit(&self, key: Key) -> f64 {
        unit_from_bits(mix2(absorb(self.seed, TAG_UNIT), key))
    }

    /// Hash(b, x) ~ U[0,1), independent across buckets.
    #[inline]
    pub fn bucket(&self, bucket: u64, key: Key) -> f64 {
        unit_from_bits(mix3(absorb(self.seed, TAG_BUCKET), bucket, key))
    }
}

/// Master seed with pure per-purpose derivation.
///
/// `unit_at(tag, a, b)` is a pure function, so independent draws can be
/// addressed by coordinates (e.g. per eviction event and key).  `stream(tag)`
/// gives a cheap counter-based sequence for "fresh per element" draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomSource {
    master: u64,
}

impl RandomSource {
    pub fn new(master: u64) -> Self {
        RandomSource { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// A derived, statistically independent source.
    pub fn derive(&self, tag: u64, index: u64) -> RandomSource {
        RandomSource {
            master: mix3(self.master, tag, index),
        }
    }

    #[inline]
    pub fn unit_at(&self, tag: u64, a: u64, b: u64) -> f64 {
        unit_from_bits(mix4(self.master, tag, a, b))
    }

    pub fn stream(&self, tag: u64) -> UnitStream {
        UnitStream {
            base: absorb(self.master, tag),
            counter: 0,
        }
    }
}

/// Counter-based stream of U[0,1) draws.
#[derive(Clone, Debug)]
pub struct UnitStream {
    base: u64,
    counter: u64,
}

impl UnitStream {
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        let bits = mix2(self.base, self.counter);
        self.counter += 1;
        unit_from_bits(bits)
    }
}

/// Hasher for `HashMap<u64, _>`: one multiply-xor round is plenty for
/// canonical key ids and far cheaper than SipHash.
#[derive(Clone, Copy, Default)]
pub struct KeyIdHash(u64);

impl Hasher for KeyIdHash {
    #[inline]
    fn write_u64(&mut self, x: u64) {
        self.0 = splitmix(x ^ 0x2545_f491_4f6c_dd1d);
    }

    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            self.0 = absorb(self.0, u64::from_le_bytes(word));
        }
    }

    #[inline]
    fn finish(&self) -> u64 {
        self.0
    }
}

#[derive(Clone, Copy, Default)]
pub struct BuildKeyIdHash;

impl BuildHasher for BuildKeyIdHash {
    type Hasher = KeyIdHash;

    #[inline]
    fn build_hasher(&self) -> KeyIdHash {
        KeyIdHash::default()
    }
}

pub type FastMap<V> = std::collections::HashMap<Key, V, BuildKeyIdHash>;
pub type FastSet = std::collections::HashSet<Key, BuildKeyIdHash>;
