//! Named random-number streams.
//!
//! All randomness in a run flows from one master seed. Each consumer gets its
//! own ChaCha stream so that, e.g., switching the precision predictor from
//! oracle to noisy does not perturb the arrival or channel processes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Logical sub-streams of a run's master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Arrivals,
    Channels,
    Tasks,
    PredictorNoise,
    Regime,
    Calibration,
}

impl Stream {
    fn index(self) -> u64 {
        match self {
            Stream::Arrivals => 1,
            Stream::Channels => 2,
            Stream::Tasks => 3,
            Stream::PredictorNoise => 4,
            Stream::Regime => 5,
            Stream::Calibration => 6,
        }
    }
}

/// A ChaCha generator bound to `(master_seed, stream)`.
pub fn named_stream(master_seed: u64, stream: Stream) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream.index());
    rng
}

/// Generator for data derived from a single object (e.g. one task's
/// per-server observation noise). `tag` distinguishes consumers.
pub fn derived_stream(object_seed: u64, tag: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(object_seed);
    rng.set_stream(tag);
    rng
}
