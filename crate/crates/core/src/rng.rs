//! Named, hierarchically derived random streams.
//!
//! Every consumer of randomness asks for its own stream by name (and
//! optionally a tuple of indices such as `(epoch, batch, slot)`), so adding
//! or removing draws in one place never shifts the sequence seen elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A seed plus a path of names and indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { key: splitmix(seed) }
    }

    /// A child stream identified by `name`.
    pub fn child(&self, name: &str) -> Self {
        Self {
            key: splitmix(self.key ^ fnv1a(name)),
        }
    }

    /// A child stream identified by an integer index.
    pub fn index(&self, i: u64) -> Self {
        Self {
            key: splitmix(self.key.rotate_left(17) ^ splitmix(i)),
        }
    }

    /// A child stream for a tuple of indices.
    pub fn indices(&self, path: &[u64]) -> Self {
        path.iter().fold(*self, |s, &i| s.index(i))
    }

    /// A generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }

    /// Shorthand for `self.child(name).rng()`.
    pub fn substream(&self, name: &str) -> ChaCha8Rng {
        self.child(name).rng()
    }
}
