//! Keyed, splittable random streams.
//!
//! A stream is identified by `(seed, purpose, replica)` and a word counter. The key is a
//! ChaCha8 key derived from the seed and the purpose tag; the replica selects the ChaCha
//! stream, so replicas never overlap and any position can be revisited with [`RandomStream::seek`].

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn key_from(a: u64, b: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = mix64(a) ^ b.rotate_left(17);
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    key_id: u64,
    replica: u64,
}

impl RandomStream {
    pub fn new(seed: u64, purpose: &str) -> Self {
        Self::keyed(mix64(seed) ^ fnv1a(purpose), 0)
    }

    pub fn for_replica(seed: u64, purpose: &str, replica: u64) -> Self {
        Self::new(seed, purpose).replica(replica)
    }

    fn keyed(key_id: u64, replica: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(key_from(key_id, 0x6b63_6d6c));
        rng.set_stream(replica);
        RandomStream { rng, key_id, replica }
    }

    /// Same key, independent ChaCha stream, counter reset.
    pub fn replica(&self, replica: u64) -> Self {
        Self::keyed(self.key_id, replica)
    }

    /// A stream with a fresh key derived from this one and `label`.
    pub fn derive(&self, label: &str) -> Self {
        Self::keyed(mix64(self.key_id ^ fnv1a(label)), self.replica)
    }

    pub fn replica_id(&self) -> u64 {
        self.replica
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn seek(&mut self, word_pos: u128) {
        self.rng.set_word_pos(word_pos);
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform_open().ln() / rate
    }

    /// Uniform integer in `[0, n)`, unbiased (Lemire's method).
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let mut m = (self.rng.next_u64() as u128) * (n as u128);
        if (m as u64) < n {
            let t = n.wrapping_neg() % n;
            while (m as u64) < t {
                m = (self.rng.next_u64() as u128) * (n as u128);
            }
        }
        (m >> 64) as u64
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
