use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// What a stream is used for. The discriminant is the ChaCha stream (nonce).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Diffusion = 0,
    RebirthIndex = 1,
    Bridge = 2,
    /// Rebirth draws of the second system of a coupled pair while the pair
    /// is decoupled.
    PairedRebirthIndex = 3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StreamId {
    pub replica: u64,
    pub particle: u64,
    pub epoch: u64,
    pub purpose: Purpose,
}

impl StreamId {
    pub fn new(replica: u64, particle: u64, epoch: u64, purpose: Purpose) -> Self {
        StreamId { replica, particle, epoch, purpose }
    }
}

/// Counter-based random stream: ChaCha8 keyed by `(seed, replica, particle,
/// epoch)` with the purpose as stream number. Any stream can be replayed
/// from any counter without touching the others.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut key = [0u8; 32];
        for (chunk, word) in key.chunks_exact_mut(8).zip([seed, id.replica, id.particle, id.epoch]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(id.purpose as u64);
        RngStream { seed, id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Position in 32-bit words.
    pub fn counter(&self) -> u64 {
        self.rng.get_word_pos() as u64
    }

    pub fn seek(&mut self, counter: u64) {
        self.rng.set_word_pos(counter as u128);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }

    /// Uniform on `0..n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        self.rng.random_range(0..n as u64) as usize
    }
}
