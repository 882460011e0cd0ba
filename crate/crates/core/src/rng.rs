//! Seeded randomness split into independent named substreams.
//!
//! Draws are keyed rather than sequential: a draw is a pure function of
//! `(seed, substream, key)`. Consumers choose keys that identify the decision
//! being made (a frame/receiver pair, a sensing sample), so adding or removing
//! unrelated consumers never shifts anyone else's draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Named consumers of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Substream {
    ChannelLoss,
    Detector,
    Scenario,
}

impl Substream {
    fn tag(self) -> u64 {
        match self {
            Substream::ChannelLoss => 0x6c6f_7373,
            Substream::Detector => 0x6465_7465,
            Substream::Scenario => 0x7363_656e,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn generator(&self, substream: Substream, key: u64) -> ChaCha8Rng {
        let mut material = [0u8; 32];
        material[..8].copy_from_slice(&self.seed.to_le_bytes());
        material[8..16].copy_from_slice(&substream.tag().to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(material);
        rng.set_stream(key);
        rng
    }

    /// Uniform draw in `[0, 1)` for `key` within `substream`.
    pub fn uniform(&self, substream: Substream, key: u64) -> f64 {
        self.generator(substream, key).gen::<f64>()
    }

    /// Bernoulli trial with success probability `p`. `p <= 0` and `p >= 1`
    /// short-circuit without touching the generator.
    pub fn bernoulli(&self, substream: Substream, key: u64, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform(substream, key) < p
        }
    }

    /// A sequential generator for consumers that need a stream of draws
    /// (scenario construction, test fixtures).
    pub fn sequential(&self, substream: Substream, key: u64) -> ChaCha8Rng {
        self.generator(substream, key)
    }
}

/// Packs a frame/receiver triple into one key. Agent ids above `u16::MAX`
/// are rejected at scenario validation.
pub fn frame_receiver_key(sender: u32, seq: u64, receiver: u32) -> u64 {
    debug_assert!(sender <= u16::MAX as u32 && receiver <= u16::MAX as u32);
    ((sender as u64) << 48) | ((receiver as u64) << 32) | (seq & 0xffff_ffff)
}

/// Packs an agent and a per-agent sample counter into one key.
pub fn agent_sample_key(agent: u32, sample: u64) -> u64 {
    ((agent as u64) << 32) | (sample & 0xffff_ffff)
}
