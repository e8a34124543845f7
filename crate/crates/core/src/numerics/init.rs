use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::tensor::Tensor;

/// Seedable generator used everywhere randomness is needed. ChaCha keeps
/// streams reproducible across platforms and crate versions.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Glorot/Xavier uniform `fan_in × fan_out` matrix, bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    assert!(fan_in >= 1 && fan_out >= 1, "fans must be >= 1");
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches length")
}
