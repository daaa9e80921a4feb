//! Seeded sampling helpers. Every random draw in the crate goes through a
//! ChaCha stream so results are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numeric::Tensor;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut SeededRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniform_vec(rng: &mut SeededRng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..=hi)).collect()
}

pub fn normal_tensor(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), normal_vec(rng, len)).unwrap()
}

pub fn uniform_tensor(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), uniform_vec(rng, len, lo, hi)).unwrap()
}
