//! Named random sub-streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent generator for `(seed, name)`. Streams with different names
/// never share state, so adding a consumer leaves the others untouched.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derived 64-bit seed, for handing a stream to code that takes a plain seed.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    use rand::RngCore;
    substream(seed, name).next_u64()
}
