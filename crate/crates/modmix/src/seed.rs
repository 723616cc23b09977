//! Root-seed handling shared by the CLI and the dataset builder.
//!
//! All randomness in a run flows from one root seed. Work items derive
//! their own seed as `root ^ fnv1a64(item_key)`, so the result of any item
//! is independent of scheduling and worker count.

/// Seed used when the user does not pass `--seed`. Runs are fully
/// deterministic by default.
pub const DEFAULT_SEED: u64 = 42;

/// FNV-1a 64-bit hash (offset basis 0xcbf29ce484222325, prime
/// 0x100000001b3). Stable across platforms and releases; part of the
/// reproducibility contract.
pub fn fnv1a64(data: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in data.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Derives the seed for a named work item from the root seed.
pub fn derive_seed(root: u64, item_key: &str) -> u64 {
    root ^ fnv1a64(item_key)
}
