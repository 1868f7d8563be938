//! Seeded random streams.
//!
//! A run seed fans out into independent ChaCha streams, one per purpose, so
//! that e.g. switching dropout off leaves the shuffling order untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Shuffle,
    Negatives,
    Dropout,
    Split,
    /// Per-document stream for corpus generation.
    Document(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Shuffle => 2,
            Stream::Negatives => 3,
            Stream::Dropout => 4,
            Stream::Split => 5,
            Stream::Document(doc) => (1 << 32) + doc,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
