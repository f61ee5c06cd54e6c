//! Seeded random streams derived from one master seed.
//!
//! Each consumer gets an independent ChaCha stream so that, for example,
//! changing the shuffle order never changes parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Oov = 3,
    Split = 4,
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    sub_stream_rng(master, stream, 0)
}

/// Stream `stream`, sub-index `sub` (e.g. the epoch for shuffling).
pub fn sub_stream_rng(master: u64, stream: Stream, sub: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((stream as u64) << 32) | sub as u64);
    rng
}
