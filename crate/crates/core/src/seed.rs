//! Counter-based expansion of one top-level seed into independent streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Environment variable consulted when no explicit seed is given.
pub const SEED_ENV: &str = "FADE_KIT_SEED";

/// A root seed from which numbered, mutually independent RNG streams are
/// derived. Stream `k` is ChaCha8 keyed by the root seed with stream id `k`,
/// so the same `(root, k)` always yields the same sequence regardless of
/// which other streams were drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    root: u64,
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(stream);
        rng
    }

    /// Derive a child seed stream, e.g. one per scenario stage.
    pub fn child(&self, stream: u64) -> SeedStream {
        use rand::RngCore;
        SeedStream::new(self.rng(stream).next_u64())
    }
}
