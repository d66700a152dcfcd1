//! Per-component random streams split from one master seed.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed with a fixed
//! stream id, so the components never share draws: replacing the sampler
//! stream leaves environment resets and acting noise untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamId {
    /// Network initialization.
    Init = 1,
    /// Per-episode environment reset seeds.
    Env = 2,
    /// Exploration noise of the acting policy.
    Act = 3,
    /// Replay mini-batch indices.
    Sampler = 4,
    /// Reparameterization noise inside gradient steps.
    Update = 5,
    /// Exploration noise of the inhibitory policy.
    Inhibitor = 6,
}

pub fn stream(master: u64, id: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(id as u64);
    rng
}

/// The full set of streams for one run.
#[derive(Clone, Debug)]
pub struct Streams {
    pub init: ChaCha8Rng,
    pub env: ChaCha8Rng,
    pub act: ChaCha8Rng,
    pub sampler: ChaCha8Rng,
    pub update: ChaCha8Rng,
    pub inhibitor: ChaCha8Rng,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self {
            init: stream(master, StreamId::Init),
            env: stream(master, StreamId::Env),
            act: stream(master, StreamId::Act),
            sampler: stream(master, StreamId::Sampler),
            update: stream(master, StreamId::Update),
            inhibitor: stream(master, StreamId::Inhibitor),
        }
    }
}
