//! Counter-based seeding: every (seed, step, stage) gets its own stream, and
//! per-firm decisions hash (seed, step, firm) directly. Draws for one entity
//! therefore do not shift when other parts of the step change.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn mix(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(seed ^ splitmix64(a.wrapping_mul(0x100_0000_01B3) ^ splitmix64(b)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    AddFirms = 1,
    RemoveLinks = 2,
    RemoveFirms = 3,
    CreateStubs = 4,
    Connect = 5,
}

pub fn stage_rng(seed: u64, step: u64, stage: Stage) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, step, stage as u64))
}

/// Uniform in [0, 1) keyed by (seed, step, entity).
pub fn keyed_unit(seed: u64, step: u64, entity: u64) -> f64 {
    let bits = mix(seed ^ 0xA5A5_5A5A_C3C3_3C3C, step, entity) >> 11;
    bits as f64 * (1.0 / (1u64 << 53) as f64)
}
