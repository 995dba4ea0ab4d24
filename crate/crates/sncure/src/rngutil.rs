//! Derivation of independent, reproducible RNG streams from a master seed.
//! Parallel workers each get a stream keyed by their index, so execution
//! order never changes results.

/// splitmix64 finalizer over the combined key.
pub(crate) fn stream_seed(seed: u64, idx: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(idx.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
