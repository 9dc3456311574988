use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Whether stochastic layers sample (training) or pass through (evaluation).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Eval,
    /// Masks are a pure function of `(seed, step, stream, input node id)`.
    Train { seed: u64, step: u64, stream: u64 },
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes counters into a single 64-bit key.
pub fn counter_key(seed: u64, step: u64, stream: u64, id: u64) -> u64 {
    let mut k = splitmix(seed);
    for part in [step, stream, id] {
        k = splitmix(k ^ part);
    }
    k
}

/// Uniform `[0, 1)` stream determined entirely by `key`.
pub fn uniform_from_key(key: u64) -> impl FnMut() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    move || rng.gen::<f64>()
}
