//! Seeded, splittable randomness. Every experiment draws from one root seed;
//! independent components derive their own stream by a fixed label so adding
//! a consumer never perturbs the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Root of all randomness for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeed(pub u64);

impl RunSeed {
    /// Derive an independent generator for the component named `label`.
    pub fn stream(self, label: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(fnv1a(label.as_bytes()));
        rng
    }

    /// Stream further keyed by an integer (e.g. a time step).
    pub fn stream_at(self, label: &str, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        let mut h = fnv1a(label.as_bytes());
        h ^= index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        rng.set_stream(h);
        rng
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
