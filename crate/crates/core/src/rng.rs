//! Seed derivation for counter-based experiment splits.
//!
//! Trials, grid cells and instances all derive their seeds from a master seed
//! plus a stream counter, so adding trials or reordering parallel work never
//! perturbs existing draws.

/// SplitMix64 mix of a master seed and a stream counter. Stateless and
/// portable; the same `(master, stream)` pair always yields the same seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Two-level split for nested loops (cell, trial).
pub fn derive_seed2(master: u64, outer: u64, inner: u64) -> u64 {
    derive_seed(derive_seed(master, outer), inner)
}
