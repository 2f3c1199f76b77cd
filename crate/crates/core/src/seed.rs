//! Seed derivation for independent, reproducible random streams.

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an ordered list of integers into one seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Stream tags so that e.g. the threat field and the human never share a stream.
pub mod stream {
    pub const THREAT_FIELD: u64 = 1;
    pub const HUMAN: u64 = 2;
    pub const THETA: u64 = 3;
    pub const HUMAN_WEIGHTS: u64 = 4;
    pub const MISSION: u64 = 5;
}
