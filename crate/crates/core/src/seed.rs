//! Named sub-stream seed derivation.
//!
//! Every run takes one seed; each stage and each item inside a stage derives
//! its own RNG from (seed, label, index) so adding a stage or reordering a
//! loop never perturbs the draws of another.

use sha2::{Digest, Sha256};

pub fn substream(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

pub fn rng(seed: u64, label: &str, index: u64) -> rand_chacha::ChaCha12Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha12Rng::seed_from_u64(substream(seed, label, index))
}
