//! Seeded random streams.
//!
//! Every run owns one 64-bit seed. Independent sub-tasks draw from numbered
//! ChaCha streams of that seed, so the numbers a sub-task sees do not depend
//! on how many workers run or in which order they finish.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream identifiers used by the library. Callers may use any other value.
pub mod streams {
    pub const DATASET: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const MULTISTART: u64 = 4;
    pub const PROBES: u64 = 5;
    pub const SAMPLES: u64 = 6;
    /// First stream handed to per-instance sub-runs.
    pub const INSTANCES: u64 = 1 << 32;
}

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform sample from the closed ball `B(center, radius)`.
pub fn uniform_in_ball(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = crate::linalg::norm(&dir).max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    center.iter().zip(&dir).map(|(c, u)| c + r * u / norm).collect()
}

/// Uniform sample from the sphere of radius `radius` around `center`.
pub fn uniform_on_sphere(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let dir: Vec<f64> = (0..center.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm = crate::linalg::norm(&dir).max(f64::MIN_POSITIVE);
    center.iter().zip(&dir).map(|(c, u)| c + radius * u / norm).collect()
}
