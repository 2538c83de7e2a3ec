//! Counter-based seed derivation.
//!
//! Every random stream in the crate is keyed by a root seed plus a path of
//! integers (domain tag, round, client id, ...). Streams never depend on
//! call order, so parallel execution cannot change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Domain tags keeping independent streams apart.
pub mod domain {
    pub const CLIENT_SAMPLING: u64 = 1;
    pub const CLIENT_UPDATE: u64 = 2;
    pub const TREE_NODE: u64 = 3;
    pub const EVAL_SAMPLING: u64 = 4;
    pub const PARTITION: u64 = 5;
    pub const PRETRAIN: u64 = 6;
    pub const INIT: u64 = 7;
    pub const MOCK: u64 = 8;
    pub const SYNTH: u64 = 9;
    pub const CORPUS: u64 = 10;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `root` with each element of `path` into a new 64-bit seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A ChaCha8 generator for the stream at `path` under `root`.
pub fn stream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

/// First eight bytes of SHA-256 over `bytes`, as a seed component.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
