use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::C64;

/// A reproducible random stream.
pub type Stream = ChaCha20Rng;

/// Derives the substream for `(seed, label)`.
///
/// The ChaCha key is the SHA-256 digest of the little-endian seed followed by
/// the label bytes, so distinct labels (or seeds) give unrelated streams and
/// the same pair always gives the same draws.
pub fn make_rng(seed: u64, stream_label: &str) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(stream_label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

/// Hands out labelled substreams of one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngFactory {
    pub seed: u64,
}

impl RngFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, label: &str) -> Stream {
        make_rng(self.seed, label)
    }

    /// Stream for the `index`-th item under `label`, e.g. one Monte Carlo trial.
    pub fn indexed(&self, label: &str, index: u64) -> Stream {
        make_rng(self.seed, &format!("{label}#{index}"))
    }
}

/// One draw from CN(0, variance).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * (0.5 * variance).sqrt()
}
