//! Seeded randomness. Every stochastic routine draws from ChaCha8 seeded through
//! `SeedableRng::seed_from_u64`; parallel work uses disjoint ChaCha streams of the
//! same seed, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Real;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator number `stream` derived from `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal<T: Real>(rng: &mut Rng) -> T {
    let x: f64 = StandardNormal.sample(rng);
    T::lit(x)
}

/// Uniformly distributed unit vector in `dim` dimensions.
pub fn unit_vector<T: Real>(rng: &mut Rng, dim: usize) -> Vec<T> {
    loop {
        let v: Vec<T> = (0..dim).map(|_| normal(rng)).collect();
        let norm = crate::linalg::norm(&v);
        if norm > T::tol(1e-12) {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
