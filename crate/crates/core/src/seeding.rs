//! Seed derivation for independent random streams.
//!
//! All randomness in the crate flows from one base seed. Per-image, per-trial,
//! and per-tree generators get their own seeds derived with the SplitMix64
//! finalizer, so streams are decorrelated, stable across runs, and independent
//! of evaluation order.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for substream `stream` of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}
