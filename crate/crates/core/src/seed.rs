//! Named random substreams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent generator for `(root, name, keys)`. Streams with different
/// names or keys are uncorrelated; the same triple always replays.
pub fn substream(root: u64, name: &str, keys: &[u64]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    for k in keys {
        h.update(k.to_le_bytes());
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&h.finalize());
    ChaCha8Rng::from_seed(seed)
}
