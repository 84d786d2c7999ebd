//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! user seed and a 64-bit stream id. The stream id packs a [`StreamKind`] tag
//! in the top byte and an index (iteration number, trial number, ...) in the
//! rest, so two components never share a stream and each one can be replayed
//! on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named purposes for random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Dict = 1,
    Codes = 2,
    Noise = 3,
    Pairs = 4,
    Perturb = 5,
    Trials = 6,
    MomentCodes = 7,
    PairCodes = 8,
}

const INDEX_MASK: u64 = (1 << 56) - 1;

/// Generator for `(seed, kind, index)`.
pub fn stream(seed: u64, kind: StreamKind, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 56) | (index & INDEX_MASK));
    rng
}
