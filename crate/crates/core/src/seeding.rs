use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator for an independent stream of `seed`. Streams for
/// different indices never overlap, so growing a collection keeps the draws
/// of its existing members.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a tag (SplitMix64 finalizer).
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    let mut z = parent ^ tag.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
