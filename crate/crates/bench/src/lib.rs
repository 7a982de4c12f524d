//! Shared input generators for the benchmark suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use isom_core::DesignSample;

/// Noisy quadratic-trend sample on a uniform design, seeded and
/// reproducible.
pub fn trend_sample(n: usize, seed: u64) -> DesignSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (1..=n)
        .map(|i| {
            let t = i as f64 / (n + 1) as f64;
            (t, 10.0 + 5.0 * t * t + rng.gen_range(-1.5..1.5))
        })
        .collect();
    DesignSample::new(pts).unwrap()
}
