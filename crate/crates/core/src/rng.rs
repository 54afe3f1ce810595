//! Deterministic random substreams.
//!
//! Every stochastic source of an episode draws from its own ChaCha20
//! generator. The 64-bit seed of a substream is obtained by absorbing
//! `(master, replication, purpose, index)` into a SplitMix64 state, one word
//! at a time:
//!
//! ```text
//! h = mix(master ^ GOLDEN)
//! h = mix(h ^ replication)
//! h = mix(h ^ purpose_tag)
//! h = mix(h ^ index)
//! ```
//!
//! so the stream of replication `r` never depends on how many other
//! replications exist.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Contexts of one arm.
    Context,
    /// Score noise of one agent.
    Noise,
    /// Anything outside an episode (test fixtures, instance generation).
    Auxiliary,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Context => 0x636f_6e74_6578_7431,
            StreamPurpose::Noise => 0x6e6f_6973_6532_0000,
            StreamPurpose::Auxiliary => 0x6175_7869_6c69_6172,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(master: u64, replication: u64, purpose: StreamPurpose, index: u64) -> u64 {
    let mut h = splitmix(master ^ GOLDEN);
    h = splitmix(h ^ replication);
    h = splitmix(h ^ purpose.tag());
    splitmix(h ^ index)
}

pub fn substream(master: u64, replication: u64, purpose: StreamPurpose, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(stream_seed(master, replication, purpose, index))
}

/// The context and noise generators of one replication.
#[derive(Debug, Clone)]
pub struct EpisodeStreams {
    pub contexts: Vec<ChaCha20Rng>,
    pub noise: Vec<ChaCha20Rng>,
}

impl EpisodeStreams {
    pub fn new(master: u64, replication: u64, arms: usize, agents: usize) -> Self {
        Self {
            contexts: (0..arms as u64)
                .map(|j| substream(master, replication, StreamPurpose::Context, j))
                .collect(),
            noise: (0..agents as u64)
                .map(|i| substream(master, replication, StreamPurpose::Noise, i))
                .collect(),
        }
    }
}
