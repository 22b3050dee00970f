//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream)`, so work can
//! be split into fixed chunks whose samples never depend on how the chunks
//! are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform sample in the box `[lo, hi]`, written into `out`.
pub fn uniform_in_box<R: Rng>(rng: &mut R, lo: &[f64], hi: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(lo).zip(hi) {
        let u: f64 = rng.random();
        *o = a + (b - a) * u;
    }
}
