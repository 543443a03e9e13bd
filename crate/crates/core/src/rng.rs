//! Keyed random substreams.
//!
//! Every random draw in a simulation comes from a ChaCha8 stream keyed by
//! the root seed and a tuple of coordinates (scenario, round, hop, ...), so
//! a stream depends only on its coordinates and never on the order in which
//! other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRng {
    root: u64,
}

impl TrialRng {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Independent stream for the given coordinates.
    pub fn substream(&self, coords: &[u64]) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut h = mix64(self.root);
        for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
            for &c in coords {
                h = mix64(h ^ c.wrapping_add(i as u64));
            }
            h = mix64(h ^ i as u64);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
