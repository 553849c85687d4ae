//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit [`SimRng`]. Independent parts of
//! one experiment draw from separate ChaCha streams of the same seed, so
//! adding draws to one part never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream ids used by the simulation drivers.
pub mod stream {
    pub const DIFFUSION: u64 = 0;
    pub const PHOTONS: u64 = 1;
    pub const NOISE: u64 = 2;
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for_stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Poisson draw that accepts a zero mean.
pub fn poisson(rng: &mut SimRng, mean: f64) -> u64 {
    use rand_distr::{Distribution, Poisson};
    if mean <= 0.0 || !mean.is_finite() {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Standard normal draw.
pub fn gaussian(rng: &mut SimRng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}
