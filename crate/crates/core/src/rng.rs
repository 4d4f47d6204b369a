//! Seeded, counter-based random streams.
//!
//! Every subsystem draws from its own ChaCha stream derived from the episode
//! seed, so adding draws in one subsystem never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Lidar = 1,
    Ais = 2,
    Policy = 3,
    ScenarioGen = 4,
    Certification = 5,
    Test = 99,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
