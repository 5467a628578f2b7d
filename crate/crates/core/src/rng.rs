//! Keyed random streams.
//!
//! Every stream is a ChaCha8 generator whose key is built from the master
//! seed, the scenario stream key and the replication index, and whose
//! 64-bit stream selector encodes the arm and purpose. Output therefore
//! depends only on `(master_seed, StreamId)`, never on which worker thread
//! draws from it or in what order streams are created.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treatment];

    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treatment => "treatment",
        }
    }

    fn bit(self) -> u64 {
        match self {
            Arm::Control => 0,
            Arm::Treatment => 1 << 63,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Cluster-specific latent effects, drawn in cluster order.
    ClusterLatent,
    /// Participant outcomes of one cluster, drawn in enrollment order.
    Observations { cluster: u32 },
    /// Posterior draws for the Monte-Carlo superiority probability.
    PosteriorDraws { stage: u32 },
    /// Metropolis chains.
    Sampler { chain: u32 },
    /// Anything outside the trial engine (tests, examples).
    Auxiliary { tag: u32 },
}

impl Purpose {
    fn code(self) -> u64 {
        const SHIFT: u32 = 40;
        match self {
            Purpose::ClusterLatent => 0,
            Purpose::Observations { cluster } => (1 << SHIFT) | u64::from(cluster),
            Purpose::PosteriorDraws { stage } => (2 << SHIFT) | u64::from(stage),
            Purpose::Sampler { chain } => (3 << SHIFT) | u64::from(chain),
            Purpose::Auxiliary { tag } => (4 << SHIFT) | u64::from(tag),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub scenario_key: u64,
    pub replication: u64,
    pub arm: Arm,
    pub purpose: Purpose,
}

impl StreamId {
    pub fn new(scenario_key: u64, replication: u64, arm: Arm, purpose: Purpose) -> Self {
        Self {
            scenario_key,
            replication,
            arm,
            purpose,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    id: StreamId,
    inner: ChaCha8Rng,
}

const DOMAIN_TAG: u64 = 0x6263_7274_5f72_6e67; // "bcrt_rng"

impl RngStream {
    pub fn new(master_seed: u64, id: StreamId) -> Self {
        let mut key = [0u8; 32];
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([master_seed, id.scenario_key, id.replication, DOMAIN_TAG])
        {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(id.arm.bit() | id.purpose.code());
        Self { id, inner }
    }

    /// Stream for ad-hoc use outside the trial engine.
    pub fn auxiliary(master_seed: u64, tag: u32) -> Self {
        Self::new(master_seed, StreamId::new(0, 0, Arm::Control, Purpose::Auxiliary { tag }))
    }

    pub fn id(&self) -> StreamId {
        self.id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
