//! Deterministic random streams.
//!
//! Every experiment owns one root seed. Components draw from disjoint
//! ChaCha20 streams keyed by that seed, so consuming one stream never
//! perturbs another and results do not depend on the platform or on the
//! order in which components run.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Root stream for `seed`.
pub fn make_rng(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent substream `index` of the root stream for `seed`.
pub fn substream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// What a stream is used for inside one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    InitialDesign = 1,
    Noise = 2,
    KdeSampling = 3,
    GmmInit = 4,
    Restarts = 5,
    Training = 6,
    Probe = 7,
}

/// Stream factory for one experiment repeat.
///
/// Stream ids pack `(repeat: 24 bits, purpose: 8 bits, index: 32 bits)`.
#[derive(Debug, Clone, Copy)]
pub struct Streams {
    seed: u64,
    repeat: u64,
}

impl Streams {
    pub fn new(seed: u64, repeat: u64) -> Self {
        Self { seed, repeat: repeat & 0xff_ffff }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn repeat(&self) -> u64 {
        self.repeat
    }

    pub fn get(&self, purpose: Purpose, index: u64) -> Rng {
        let id = (self.repeat << 40) | ((purpose as u64) << 32) | (index & 0xffff_ffff);
        substream(self.seed, id)
    }
}
