//! Seeded random streams.
//!
//! All randomness flows through [`SeededRng`], a ChaCha8 generator whose
//! 256-bit seed is derived from a `(master seed, stream name, index)` triple:
//!
//! ```text
//! seed = SHA-256( "vector-rng/v1" || 0x00 || master_seed (u64 LE) || 0x00
//!                 || stream name (UTF-8) || 0x00 || index (u64 LE) )
//! ```
//!
//! Batches derive one stream per instance index, so the `i`-th instance of a
//! batch is identical whether it was generated alone, sequentially, or on a
//! thread pool. ChaCha8 output is platform independent.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"vector-rng/v1";

/// Where a random stream came from. Stored on every generated instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub master_seed: u64,
    pub stream: String,
    pub index: u64,
}

impl SeedProvenance {
    pub fn new(master_seed: u64, stream: impl Into<String>, index: u64) -> Self {
        Self {
            master_seed,
            stream: stream.into(),
            index,
        }
    }

    pub fn derive_seed(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN);
        hasher.update([0u8]);
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update([0u8]);
        hasher.update(self.stream.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.index.to_le_bytes());
        hasher.finalize().into()
    }
}

/// A named, seedable, portable random generator.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
    origin: SeedProvenance,
}

impl SeededRng {
    pub fn new(master_seed: u64, stream: impl Into<String>, index: u64) -> Self {
        Self::from_provenance(SeedProvenance::new(master_seed, stream, index))
    }

    /// Shorthand for the `"default"` stream at index 0.
    pub fn from_seed(master_seed: u64) -> Self {
        Self::new(master_seed, "default", 0)
    }

    pub fn from_provenance(origin: SeedProvenance) -> Self {
        let inner = ChaCha8Rng::from_seed(origin.derive_seed());
        Self { inner, origin }
    }

    pub fn origin(&self) -> &SeedProvenance {
        &self.origin
    }

    /// Independent child stream, named relative to this one.
    pub fn substream(&self, name: &str, index: u64) -> SeededRng {
        SeededRng::new(
            self.origin.master_seed,
            format!("{}/{}#{}", self.origin.stream, name, self.origin.index),
            index,
        )
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_triple_same_stream() {
        let mut a = SeededRng::new(7, "t1/L1", 3);
        let mut b = SeededRng::new(7, "t1/L1", 3);
        let xs: Vec<u64> = (0..16).map(|_| a.random()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.random()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn streams_are_separated() {
        let mut a = SeededRng::new(7, "t1/L1", 3);
        let mut b = SeededRng::new(7, "t1/L1", 4);
        let mut c = SeededRng::new(7, "t1/L2", 3);
        let x: u64 = a.random();
        assert_ne!(x, b.random::<u64>());
        assert_ne!(x, c.random::<u64>());
    }

    #[test]
    fn seed_derivation_is_pinned() {
        // Guards the documented derivation against accidental change.
        let seed = SeedProvenance::new(0, "default", 0).derive_seed();
        let mut h = Sha256::new();
        h.update(b"vector-rng/v1\x00");
        h.update(0u64.to_le_bytes());
        h.update(b"\x00default\x00");
        h.update(0u64.to_le_bytes());
        let expected: [u8; 32] = h.finalize().into();
        assert_eq!(seed, expected);
    }
}
