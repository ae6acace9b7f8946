//! Per-replication seeds.
//!
//! `seed(base, n, rep) = mix(mix(mix(base) ^ n) ^ rep)` where `mix` is the
//! SplitMix64 finaliser. Adding sample sizes or replications never changes
//! the seeds of existing ones.

/// SplitMix64 output function applied to `x + γ`.
pub fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_seed(base: u64, n: usize, rep: usize) -> u64 {
    mix(mix(mix(base) ^ n as u64) ^ rep as u64)
}

/// Independent random streams inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Design = 1,
    Errors = 2,
}

pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    mix(seed ^ mix(stream as u64))
}
