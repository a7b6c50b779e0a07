//! Counter-based random streams.
//!
//! Every random draw in a run is addressed by a `(seed, tag, a, b)` tuple,
//! where `tag` names the consumer (noise, graph placement, ...) and `a`, `b`
//! are consumer-specific coordinates such as `(node, t)`. The tuple is folded
//! into a 64-bit key with SplitMix64 and the key seeds a ChaCha8 generator.
//! Draws therefore do not depend on the order in which streams are visited,
//! which keeps parallel and sequential executions bit-identical.
//!
//! Constants (for reimplementation in other languages):
//!
//! * SplitMix64 increment `0x9E37_79B9_7F4A_7C15`, multipliers
//!   `0xBF58_476D_1CE4_E5B9` and `0x94D0_49BB_1331_11EB`, shifts 30/27/31.
//! * `key = mix(mix(mix(mix(seed) ^ tag) ^ a) ^ b)` where `mix` is one
//!   SplitMix64 output step applied to its argument.
//! * The key seeds `ChaCha8Rng::seed_from_u64` (rand_core 0.9 expansion).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, the ASCII bytes of the consumer name. Distinct consumers
/// never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Noise = 0x6e_6f_69_73_65,
    Graph = 0x67_72_61_70_68,
    Parameter = 0x74_68_65_74_61,
    AttackSet = 0x61_74_74_61_63_6b,
    Broadcast = 0x62_72_6f_61_64_63,
    Experiment = 0x65_78_70_65_72,
}

/// One SplitMix64 step.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_key(seed: u64, tag: StreamTag, a: u64, b: u64) -> u64 {
    let k = splitmix64(seed);
    let k = splitmix64(k ^ tag as u64);
    let k = splitmix64(k ^ a);
    splitmix64(k ^ b)
}

/// Generator for the stream addressed by `(seed, tag, a, b)`.
pub fn stream(seed: u64, tag: StreamTag, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, tag, a, b))
}
